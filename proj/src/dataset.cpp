#include "s2fl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "s2fl/errors.hpp"
#include "s2fl/rng.hpp"

namespace s2fl {

namespace {

// Counts from real-valued weights, preserving the total: floor everything,
// then hand the remainder out by descending fractional part (ties to the
// earlier index).
std::vector<long long> largest_remainder_counts(const std::vector<double>& weights,
                                                long long total) {
  const int n = static_cast<int>(weights.size());
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<long long> counts(n, 0);
  std::vector<std::pair<double, int>> fracs;
  long long assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double share = wsum > 0.0 ? weights[i] / wsum * total : 0.0;
    counts[i] = static_cast<long long>(std::floor(share));
    assigned += counts[i];
    fracs.push_back({share - std::floor(share), i});
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (long long k = 0; k < total - assigned; ++k) counts[fracs[k % n].second] += 1;
  return counts;
}

LabeledDataset take_rows(const LabeledDataset& ds, const std::vector<int>& rows) {
  LabeledDataset out;
  out.n_classes = ds.n_classes;
  out.samples = Matrix(static_cast<int>(rows.size()), ds.dim());
  out.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < ds.dim(); ++c) out.samples(static_cast<int>(r), c) = ds.samples(rows[r], c);
    out.labels[r] = ds.labels[rows[r]];
  }
  return out;
}

}  // namespace

LabelDistribution histogram_of(const LabeledDataset& ds, const std::vector<int>& indices) {
  LabelDistribution h(ds.n_classes, 0);
  for (int idx : indices) h[ds.labels[idx]] += 1;
  return h;
}

LabeledDataset make_synthetic(int n_classes, int dim, int samples_per_class, std::uint64_t seed) {
  if (n_classes <= 0 || dim <= 0 || samples_per_class <= 0) {
    throw DomainError("make_synthetic: all arguments must be positive");
  }
  Rng rng(seed);
  const double kMeanScale = 3.0;
  const double kMinSeparation = 4.0;

  Matrix means(n_classes, dim);
  auto min_separation = [&]() {
    double best = kMinSeparation + 1.0;
    for (int a = 0; a < n_classes; ++a) {
      for (int b = a + 1; b < n_classes; ++b) {
        double d2 = 0.0;
        for (int c = 0; c < dim; ++c) {
          const double diff = means(a, c) - means(b, c);
          d2 += diff * diff;
        }
        best = std::min(best, std::sqrt(d2));
      }
    }
    return best;
  };
  double sep = 0.0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    for (double& v : means.data) v = kMeanScale * rng.normal();
    sep = min_separation();
    if (n_classes == 1 || sep >= kMinSeparation) break;
  }
  if (n_classes > 1 && sep < kMinSeparation) {
    // Vanishingly unlikely at scale 3, but keep construction total.
    const double blow = kMinSeparation / sep;
    for (double& v : means.data) v *= blow;
  }

  LabeledDataset ds;
  ds.n_classes = n_classes;
  ds.samples = Matrix(n_classes * samples_per_class, dim);
  ds.labels.resize(static_cast<std::size_t>(n_classes) * samples_per_class);
  int row = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int s = 0; s < samples_per_class; ++s, ++row) {
      for (int d = 0; d < dim; ++d) ds.samples(row, d) = means(c, d) + rng.normal();
      ds.labels[row] = c;
    }
  }
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds,
                                                           double test_fraction,
                                                           std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw DomainError("split_train_test: test_fraction must be in [0, 1)");
  }
  Rng rng(seed);
  std::vector<bool> is_test(ds.size(), false);
  for (int c = 0; c < ds.n_classes; ++c) {
    std::vector<int> rows;
    for (int i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == c) rows.push_back(i);
    }
    rng.shuffle(rows);
    long long take = std::llround(rows.size() * test_fraction);
    take = std::min<long long>(take, static_cast<long long>(rows.size()) - 1);
    for (long long k = 0; k < take; ++k) is_test[rows[k]] = true;
  }
  std::vector<int> train_rows, test_rows;
  for (int i = 0; i < ds.size(); ++i) (is_test[i] ? test_rows : train_rows).push_back(i);
  return {take_rows(ds, train_rows), take_rows(ds, test_rows)};
}

std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds, int clients,
                                             double alpha, std::uint64_t seed) {
  if (clients < 1) throw DomainError("partition_dirichlet: clients must be >= 1");
  if (alpha <= 0.0) throw DomainError("partition_dirichlet: alpha must be positive");
  const int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(attempt)});
    std::vector<std::vector<int>> owned(clients);
    for (int c = 0; c < ds.n_classes; ++c) {
      std::vector<int> rows;
      for (int i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == c) rows.push_back(i);
      }
      if (rows.empty()) continue;
      rng.shuffle(rows);
      const std::vector<double> props = rng.dirichlet(alpha, clients);
      const std::vector<long long> counts =
          largest_remainder_counts(props, static_cast<long long>(rows.size()));
      std::size_t cursor = 0;
      for (int k = 0; k < clients; ++k) {
        for (long long t = 0; t < counts[k]; ++t) owned[k].push_back(rows[cursor++]);
      }
    }
    const bool any_empty =
        std::any_of(owned.begin(), owned.end(), [](const auto& v) { return v.empty(); });
    if (any_empty) continue;
    std::vector<ClientShard> shards(clients);
    for (int k = 0; k < clients; ++k) {
      std::sort(owned[k].begin(), owned[k].end());
      shards[k].client_id = k;
      shards[k].indices = std::move(owned[k]);
      shards[k].label_histogram = histogram_of(ds, shards[k].indices);
    }
    return shards;
  }
  throw PartitionError(
      "partition_dirichlet: a client stayed empty after " + std::to_string(kMaxAttempts) +
      " attempts; use a larger dataset or fewer clients");
}

std::vector<ClientShard> partition_iid(const LabeledDataset& ds, int clients, std::uint64_t seed) {
  if (clients < 1) throw DomainError("partition_iid: clients must be >= 1");
  if (ds.size() < clients) {
    throw PartitionError("partition_iid: fewer samples than clients");
  }
  Rng rng(seed);
  std::vector<int> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  rng.shuffle(rows);
  const int base = ds.size() / clients;
  const int extra = ds.size() % clients;
  std::vector<ClientShard> shards(clients);
  std::size_t cursor = 0;
  for (int k = 0; k < clients; ++k) {
    const int take = base + (k < extra ? 1 : 0);
    shards[k].client_id = k;
    shards[k].indices.assign(rows.begin() + cursor, rows.begin() + cursor + take);
    std::sort(shards[k].indices.begin(), shards[k].indices.end());
    shards[k].label_histogram = histogram_of(ds, shards[k].indices);
    cursor += take;
  }
  return shards;
}

void export_csv(const LabeledDataset& ds, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("export_csv: cannot open " + path);
  for (int c = 0; c < ds.dim(); ++c) std::fprintf(f, "x%d,", c);
  std::fprintf(f, "label\n");
  for (int r = 0; r < ds.size(); ++r) {
    for (int c = 0; c < ds.dim(); ++c) std::fprintf(f, "%.17g,", ds.samples(r, c));
    std::fprintf(f, "%d\n", ds.labels[r]);
  }
  std::fclose(f);
}

}  // namespace s2fl
