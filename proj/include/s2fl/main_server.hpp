#pragma once

#include <map>
#include <vector>

#include "s2fl/dataset.hpp"
#include "s2fl/nn.hpp"

namespace s2fl {

// L2 distance of the members' combined label distribution from the uniform
// distribution over n classes: sqrt(sum_i (combined_share_i - 1/n)^2).
double balance_distance(const std::vector<LabelDistribution>& members, int n_classes);

struct Grouping {
  std::vector<std::vector<int>> groups;  // member ids, ascending within a group
  std::vector<double> distances;         // balance distance per group

  double total_distance() const {
    double t = 0.0;
    for (double d : distances) t += d;
    return t;
  }
};

// Partition the clients into ceil(x/g) groups of size <= g minimizing the
// summed balance distance. Up to 10 clients the search is exhaustive over all
// such partitions; beyond that a greedy pass seeds each group with the most
// skewed unassigned client and then adds whichever client brings the group's
// distance lowest (ties to the lowest client id). Deterministic either way.
Grouping group_clients(const std::map<int, LabelDistribution>& dists, int group_size);

// Grouping without the balance objective: chunk `order` into ceil(x/g) groups
// of size <= g as given. Distances are still reported for logging.
Grouping group_in_order(const std::vector<int>& order,
                        const std::map<int, LabelDistribution>& dists, int group_size);

// One shared server-portion copy per group. The portion starts at the
// shallowest member's split, so members with deeper splits feed their features
// in part-way through.
struct GroupTrainState {
  int group_id = 0;
  ModelPortion server_portion;
  std::map<int, int> member_entries;  // client_id -> entry layer index
};

struct GroupTrainResult {
  std::map<int, Matrix> feature_grads;  // dloss/dfx per member
  double loss = 0.0;                    // sample-count-weighted mean of member losses
};

// Train the group's server copy on the members' uploaded features: forward
// each packet from its entry layer, weight each packet's cross-entropy by its
// share of the combined batch (making the total equal to the loss of the
// concatenated batch), accumulate all parameter gradients, then take a single
// SGD step. Packets are processed in client-id order regardless of arrival
// order, so the update is exactly permutation-invariant.
GroupTrainResult train_group(GroupTrainState& state, const std::vector<FeaturePacket>& packets,
                             double lr, double l2 = 0.0);

}  // namespace s2fl
