#include "s2fl/main_server.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "s2fl/errors.hpp"

namespace s2fl {

double balance_distance(const std::vector<LabelDistribution>& members, int n_classes) {
  if (n_classes <= 0) throw DomainError("balance_distance: n_classes must be positive");
  std::vector<long long> combined(n_classes, 0);
  long long total = 0;
  for (const LabelDistribution& m : members) {
    if (static_cast<int>(m.size()) != n_classes) {
      throw DomainError("balance_distance: histogram length != n_classes");
    }
    for (int c = 0; c < n_classes; ++c) {
      combined[c] += m[c];
      total += m[c];
    }
  }
  if (total == 0) throw DomainError("balance_distance: combined histogram is empty");
  const double uniform = 1.0 / n_classes;
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const double diff = static_cast<double>(combined[c]) / static_cast<double>(total) - uniform;
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

namespace {

int classes_of(const std::map<int, LabelDistribution>& dists) {
  return static_cast<int>(dists.begin()->second.size());
}

double group_dist(const std::vector<int>& members, const std::map<int, LabelDistribution>& dists,
                  int n) {
  std::vector<LabelDistribution> hists;
  for (int id : members) hists.push_back(dists.at(id));
  return balance_distance(hists, n);
}

// Depth-first search over canonical partitions: clients are placed in id
// order, each going into an existing group with room or opening a new one.
// Completed (full) groups contribute their distance to a running sum that
// prunes branches already worse than the best found.
struct ExhaustiveSearch {
  const std::vector<int>& ids;
  const std::map<int, LabelDistribution>& dists;
  int g;
  int num_groups;
  int n;

  std::vector<std::vector<int>> current;
  double completed_sum = 0.0;
  double best_total = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> best;

  void place(std::size_t idx) {
    if (completed_sum >= best_total) return;
    if (idx == ids.size()) {
      double total = completed_sum;
      for (const auto& grp : current) {
        if (static_cast<int>(grp.size()) < g) total += group_dist(grp, dists, n);
      }
      if (total < best_total) {
        best_total = total;
        best = current;
      }
      return;
    }
    const int id = ids[idx];
    const int remaining = static_cast<int>(ids.size() - idx);
    for (std::size_t gi = 0; gi < current.size(); ++gi) {
      if (static_cast<int>(current[gi].size()) >= g) continue;
      // Groups opened later must still be able to get at least one client.
      const int open_slots = num_groups - static_cast<int>(current.size());
      if (remaining - 1 < open_slots) continue;
      current[gi].push_back(id);
      const bool closes = static_cast<int>(current[gi].size()) == g;
      const double add = closes ? group_dist(current[gi], dists, n) : 0.0;
      completed_sum += add;
      place(idx + 1);
      completed_sum -= add;
      current[gi].pop_back();
    }
    if (static_cast<int>(current.size()) < num_groups) {
      current.push_back({id});
      place(idx + 1);
      current.pop_back();
    }
  }
};

}  // namespace

Grouping group_clients(const std::map<int, LabelDistribution>& dists, int group_size) {
  if (group_size < 1) throw ConfigError("group_clients: group size must be >= 1");
  if (dists.empty()) throw DomainError("group_clients: no participants");
  const int n = classes_of(dists);
  std::vector<int> ids;
  for (const auto& [id, hist] : dists) ids.push_back(id);
  const int x = static_cast<int>(ids.size());
  const int num_groups = (x + group_size - 1) / group_size;

  Grouping out;
  if (x <= 10) {
    ExhaustiveSearch search{ids, dists, group_size, num_groups, n, {}, 0.0,
                            std::numeric_limits<double>::infinity(), {}};
    search.place(0);
    out.groups = std::move(search.best);
  } else {
    std::vector<int> unassigned = ids;
    auto single_dist = [&](int id) { return group_dist({id}, dists, n); };
    for (int gi = 0; gi < num_groups; ++gi) {
      // Seed with the most skewed client still waiting (ties: lowest id).
      std::size_t seed_at = 0;
      for (std::size_t k = 1; k < unassigned.size(); ++k) {
        if (single_dist(unassigned[k]) > single_dist(unassigned[seed_at])) seed_at = k;
      }
      std::vector<int> group{unassigned[seed_at]};
      unassigned.erase(unassigned.begin() + seed_at);
      const int groups_left = num_groups - gi - 1;
      while (static_cast<int>(group.size()) < group_size &&
             static_cast<int>(unassigned.size()) > groups_left) {
        std::size_t pick = 0;
        double pick_dist = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < unassigned.size(); ++k) {
          std::vector<int> trial = group;
          trial.push_back(unassigned[k]);
          const double d = group_dist(trial, dists, n);
          if (d < pick_dist) {
            pick_dist = d;
            pick = k;
          }
        }
        group.push_back(unassigned[pick]);
        unassigned.erase(unassigned.begin() + pick);
      }
      std::sort(group.begin(), group.end());
      out.groups.push_back(std::move(group));
    }
  }
  for (auto& grp : out.groups) std::sort(grp.begin(), grp.end());
  for (const auto& grp : out.groups) out.distances.push_back(group_dist(grp, dists, n));
  return out;
}

Grouping group_in_order(const std::vector<int>& order,
                        const std::map<int, LabelDistribution>& dists, int group_size) {
  if (group_size < 1) throw ConfigError("group_in_order: group size must be >= 1");
  if (order.empty()) throw DomainError("group_in_order: no participants");
  const int n = classes_of(dists);
  Grouping out;
  for (std::size_t at = 0; at < order.size(); at += group_size) {
    const std::size_t end = std::min(order.size(), at + group_size);
    std::vector<int> grp(order.begin() + at, order.begin() + end);
    std::sort(grp.begin(), grp.end());
    out.groups.push_back(std::move(grp));
  }
  for (const auto& grp : out.groups) out.distances.push_back(group_dist(grp, dists, n));
  return out;
}

GroupTrainResult train_group(GroupTrainState& state, const std::vector<FeaturePacket>& packets,
                             double lr, double l2) {
  if (packets.empty()) throw DomainError("train_group: no feature packets");
  std::vector<const FeaturePacket*> ordered;
  for (const FeaturePacket& p : packets) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

  ModelPortion& portion = state.server_portion;
  long long total_samples = 0;
  for (const FeaturePacket* p : ordered) {
    auto mem = state.member_entries.find(p->client_id);
    if (mem == state.member_entries.end()) {
      throw DomainError("train_group: client " + std::to_string(p->client_id) +
                        " is not a member of group " + std::to_string(state.group_id));
    }
    if (p->entry_index != mem->second) {
      throw ShapeError("train_group: client " + std::to_string(p->client_id) +
                       " uploaded features for layer " + std::to_string(p->entry_index) +
                       " but is registered at layer " + std::to_string(mem->second));
    }
    const int offset = p->entry_index - portion.entry_index;
    if (offset < 0 || offset >= portion.size()) {
      throw ShapeError("train_group: entry layer " + std::to_string(p->entry_index) +
                       " outside the group's server portion");
    }
    if (p->features.cols != portion.layers[offset].in_dim()) {
      throw ShapeError("train_group: client " + std::to_string(p->client_id) +
                       " feature width " + std::to_string(p->features.cols) +
                       " != in_dim " + std::to_string(portion.layers[offset].in_dim()) +
                       " of layer " + std::to_string(p->entry_index));
    }
    if (static_cast<int>(p->labels.size()) != p->features.rows) {
      throw ShapeError("train_group: client " + std::to_string(p->client_id) + " uploaded " +
                       std::to_string(p->features.rows) + " feature rows but " +
                       std::to_string(p->labels.size()) + " labels");
    }
    total_samples += p->features.rows;
  }

  GroupTrainResult result;
  PortionGradients grads = zero_gradients(portion.layers);
  for (const FeaturePacket* p : ordered) {
    const int offset = p->entry_index - portion.entry_index;
    const ForwardCache cache = forward_span(portion.layers, offset, p->features);
    const LossGrad lg = cross_entropy_loss(cache.outputs, p->labels);
    const double share = static_cast<double>(p->features.rows) / total_samples;
    result.loss += share * lg.loss;
    result.feature_grads[p->client_id] =
        backward_span(portion.layers, offset, cache, lg.dlogits, share, grads);
  }
  apply_sgd(portion, grads, lr, l2);
  return result;
}

}  // namespace s2fl
