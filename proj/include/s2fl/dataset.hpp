#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2fl/matrix.hpp"

namespace s2fl {

// Per-class sample counts of one client's shard.
using LabelDistribution = std::vector<long long>;

struct LabeledDataset {
  Matrix samples;           // N x dim
  std::vector<int> labels;  // class index per row
  int n_classes = 0;

  int size() const { return samples.rows; }
  int dim() const { return samples.cols; }
};

struct ClientShard {
  int client_id = 0;
  std::vector<int> indices;  // rows of the dataset owned by this client
  LabelDistribution label_histogram;
};

LabelDistribution histogram_of(const LabeledDataset& ds, const std::vector<int>& indices);

// Gaussian blobs: one unit-covariance cluster per class. Class means are drawn
// from the seeded RNG at scale 3 per coordinate and redrawn (bounded attempts)
// until every pair is at least 4 apart, which keeps the task linearly
// separable to high accuracy; if the attempts run out the last draw is scaled
// up to meet the separation, so construction never fails.
LabeledDataset make_synthetic(int n_classes, int dim, int samples_per_class, std::uint64_t seed);

// Stratified 80/20-style split: per class, a seeded shuffle selects
// round(count * test_fraction) test rows. Row order of both halves follows the
// original dataset order.
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           double test_fraction,
                                                           std::uint64_t seed);

// Label-skewed partition: for each class, proportions over clients are drawn
// Dirichlet(alpha) and converted to counts by largest remainder, then that
// class's shuffled rows are dealt out contiguously. Attempts leaving any
// client empty are re-drawn (up to 100 times) before giving up with a
// partition error.
std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds, int clients,
                                             double alpha, std::uint64_t seed);

// Shuffled equal split; the first N mod clients shards get one extra row.
std::vector<ClientShard> partition_iid(const LabeledDataset& ds, int clients, std::uint64_t seed);

// Debug export: dim feature columns then the label, one row per sample.
void export_csv(const LabeledDataset& ds, const std::string& path);

}  // namespace s2fl
