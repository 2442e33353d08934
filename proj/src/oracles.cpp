#include "s2fl/oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace s2fl {

namespace {

double partition_score(const std::vector<int>& assignment, int num_groups,
                       const std::vector<const LabelDistribution*>& hists) {
  double total = 0.0;
  const int n = static_cast<int>(hists[0]->size());
  for (int g = 0; g < num_groups; ++g) {
    std::vector<double> combined(n, 0.0);
    double count = 0.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] != g) continue;
      for (int c = 0; c < n; ++c) {
        combined[c] += static_cast<double>((*hists[i])[c]);
        count += static_cast<double>((*hists[i])[c]);
      }
    }
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      const double diff = combined[c] / count - 1.0 / n;
      sum += diff * diff;
    }
    total += std::sqrt(sum);
  }
  return total;
}

void enumerate(std::vector<int>& assignment, std::size_t idx, int used_groups, int num_groups,
               int group_size, const std::vector<const LabelDistribution*>& hists,
               std::vector<int>& sizes, double& best, std::vector<int>& best_assignment) {
  if (idx == assignment.size()) {
    if (used_groups != num_groups) return;
    const double score = partition_score(assignment, num_groups, hists);
    if (score < best) {
      best = score;
      best_assignment = assignment;
    }
    return;
  }
  // Canonical labelling: a client may reuse an existing label or open the next
  // one, so each set partition is visited exactly once.
  for (int g = 0; g <= used_groups && g < num_groups; ++g) {
    if (g < used_groups && sizes[g] >= group_size) continue;
    assignment[idx] = g;
    sizes[g] += 1;
    enumerate(assignment, idx + 1, used_groups + (g == used_groups ? 1 : 0), num_groups,
              group_size, hists, sizes, best, best_assignment);
    sizes[g] -= 1;
  }
}

}  // namespace

OracleGrouping brute_force_grouping(const std::map<int, LabelDistribution>& dists,
                                    int group_size) {
  if (dists.empty() || group_size < 1) {
    throw std::invalid_argument("brute_force_grouping: bad input");
  }
  std::vector<int> ids;
  std::vector<const LabelDistribution*> hists;
  for (const auto& [id, h] : dists) {
    ids.push_back(id);
    hists.push_back(&h);
  }
  const int x = static_cast<int>(ids.size());
  const int num_groups = (x + group_size - 1) / group_size;

  std::vector<int> assignment(x, -1), sizes(num_groups, 0), best_assignment;
  double best = std::numeric_limits<double>::infinity();
  enumerate(assignment, 0, 0, num_groups, group_size, hists, sizes, best, best_assignment);

  OracleGrouping out;
  out.total_dist = best;
  out.groups.assign(num_groups, {});
  for (int i = 0; i < x; ++i) out.groups[best_assignment[i]].push_back(ids[i]);
  return out;
}

double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
  if (values.size() != weights.size() || values.empty()) {
    throw std::invalid_argument("weighted_mean: need matching non-empty lists");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += values[i] * weights[i];
    den += weights[i];
  }
  return num / den;
}

FullModel reference_aggregate(const std::vector<ClientContribution>& client_models,
                              const std::vector<ServerPortionEntry>& server_models,
                              const std::map<int, int>& membership,
                              const FullModel& full_template) {
  FullModel result = full_template;
  for (int layer = 0; layer < full_template.num_layers(); ++layer) {
    const Layer& tmpl = full_template.layers[layer];
    auto source_value = [&](const ClientContribution& c, std::size_t flat, bool bias) -> double {
      const int c_end = c.portion.entry_index + c.portion.size();
      const Layer* src = nullptr;
      if (layer >= c.portion.entry_index && layer < c_end) {
        src = &c.portion.layers[layer - c.portion.entry_index];
      } else {
        const int group = membership.at(c.client_id);
        for (const ServerPortionEntry& e : server_models) {
          if (e.group_id != group) continue;
          const int s_end = e.portion.entry_index + e.portion.size();
          if (layer >= e.portion.entry_index && layer < s_end) {
            src = &e.portion.layers[layer - e.portion.entry_index];
          }
        }
      }
      if (!src) throw std::invalid_argument("reference_aggregate: uncovered layer");
      return bias ? src->bias[flat] : src->weight.data[flat];
    };
    Layer& dst = result.layers[layer];
    for (std::size_t k = 0; k < tmpl.weight.data.size(); ++k) {
      double num = 0.0, den = 0.0;
      for (const ClientContribution& c : client_models) {
        num += static_cast<double>(c.data_size) * source_value(c, k, false);
        den += static_cast<double>(c.data_size);
      }
      dst.weight.data[k] = num / den;
    }
    for (std::size_t k = 0; k < tmpl.bias.size(); ++k) {
      double num = 0.0, den = 0.0;
      for (const ClientContribution& c : client_models) {
        num += static_cast<double>(c.data_size) * source_value(c, k, true);
        den += static_cast<double>(c.data_size);
      }
      dst.bias[k] = num / den;
    }
  }
  return result;
}

}  // namespace s2fl
