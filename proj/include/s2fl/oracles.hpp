#pragma once

#include <map>
#include <vector>

#include "s2fl/dataset.hpp"
#include "s2fl/fed_server.hpp"

namespace s2fl {

// Reference implementations kept deliberately separate from the engine code
// paths: the grouping search enumerates raw assignment vectors and recomputes
// the distance from first principles, and the fusion reference is a flat
// elementwise weighted mean with no fixed-point shortcut. Tests (and the
// `oracle` CLI subcommand) compare the engine against these.

struct OracleGrouping {
  double total_dist = 0.0;
  std::vector<std::vector<int>> groups;
};

// Every partition of the clients into exactly ceil(x/g) groups of size <= g,
// scored by the summed distance-to-uniform of the combined histograms.
// Feasible for small x only.
OracleGrouping brute_force_grouping(const std::map<int, LabelDistribution>& dists, int group_size);

double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights);

// Same contract as aggregate(): per layer, per element, the data-size-weighted
// mean over each client's contribution (own layer if the portion holds it,
// otherwise the group's server copy).
FullModel reference_aggregate(const std::vector<ClientContribution>& client_models,
                              const std::vector<ServerPortionEntry>& server_models,
                              const std::map<int, int>& membership, const FullModel& full_template);

}  // namespace s2fl
