#include "s2fl/fed_server.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "s2fl/errors.hpp"

namespace s2fl {

void record_time(ClientTimeTable& table, int client_id, int split_index, double seconds) {
  if (seconds <= 0.0) throw DomainError("record_time: seconds must be positive");
  const auto key = std::make_pair(client_id, split_index);
  auto it = table.entries.find(key);
  if (it == table.entries.end() || table.ema_factor == 0.0) {
    table.entries[key] = seconds;
  } else {
    it->second = table.ema_factor * it->second + (1.0 - table.ema_factor) * seconds;
  }
}

void save_time_table(const ClientTimeTable& table, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("save_time_table: cannot open " + path);
  std::fprintf(f, "client_id,split_index,seconds\n");
  for (const auto& [key, seconds] : table.entries) {
    std::fprintf(f, "%d,%d,%.17g\n", key.first, key.second, seconds);
  }
  std::fclose(f);
}

ClientTimeTable load_time_table(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw ConfigError("load_time_table: cannot open " + path);
  ClientTimeTable table;
  char line[256];
  bool first = true;
  while (std::fgets(line, sizeof line, f)) {
    if (first) {  // header
      first = false;
      continue;
    }
    int client = 0, split = 0;
    double seconds = 0.0;
    if (std::sscanf(line, "%d,%d,%lg", &client, &split, &seconds) == 3) {
      table.entries[{client, split}] = seconds;
    }
  }
  std::fclose(f);
  return table;
}

int warmup_split(int round, int K) {
  if (K < 1) throw DomainError("warmup_split: K must be >= 1");
  if (round < 1 || round > K) {
    throw DomainError("warmup_split: round " + std::to_string(round) +
                      " outside the warm-up range [1, " + std::to_string(K) + "]");
  }
  return round;
}

SplitAssignment select_splits(const ClientTimeTable& table, const std::vector<int>& participants,
                              const std::vector<int>& candidates,
                              const std::function<double(int, int)>& estimate) {
  if (candidates.empty()) throw DomainError("select_splits: no split candidates");
  std::vector<int> ids = participants;
  std::sort(ids.begin(), ids.end());

  auto cell = [&](int client, int split) {
    if (table.has(client, split)) return table.get(client, split);
    if (!estimate) throw DomainError("select_splits: missing table entry and no estimator");
    return estimate(client, split);
  };

  std::vector<double> pooled;
  pooled.reserve(ids.size() * candidates.size());
  for (int id : ids) {
    for (int s : candidates) pooled.push_back(cell(id, s));
  }
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  const double median =
      (n % 2 == 1) ? pooled[n / 2] : 0.5 * (pooled[n / 2 - 1] + pooled[n / 2]);

  SplitAssignment out;
  for (int id : ids) {
    int best = candidates.front();
    double best_dist = std::abs(cell(id, best) - median);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      const double dist = std::abs(cell(id, candidates[k]) - median);
      if (dist <= best_dist) {  // <= keeps the larger candidate on ties
        best = candidates[k];
        best_dist = dist;
      }
    }
    out[id] = best;
  }
  return out;
}

namespace {

struct LayerRef {
  const Matrix* weight;
  const std::vector<double>* bias;
};

}  // namespace

FullModel aggregate(const std::vector<ClientContribution>& client_models,
                    const std::vector<ServerPortionEntry>& server_models,
                    const std::map<int, int>& membership, const FullModel& full_template) {
  if (client_models.empty()) throw DomainError("aggregate: no client contributions");
  std::map<int, const ModelPortion*> server_by_group;
  for (const ServerPortionEntry& e : server_models) server_by_group[e.group_id] = &e.portion;

  std::vector<ClientContribution const*> clients;
  for (const ClientContribution& c : client_models) clients.push_back(&c);
  std::sort(clients.begin(), clients.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

  FullModel result = full_template;
  const int L = full_template.num_layers();
  for (int layer = 0; layer < L; ++layer) {
    std::vector<LayerRef> sources;
    std::vector<double> weights;
    for (const ClientContribution* c : clients) {
      const Layer* src = nullptr;
      const int c_end = c->portion.entry_index + c->portion.size();
      if (layer >= c->portion.entry_index && layer < c_end) {
        src = &c->portion.layers[layer - c->portion.entry_index];
      } else {
        auto mem = membership.find(c->client_id);
        if (mem != membership.end()) {
          auto srv = server_by_group.find(mem->second);
          if (srv != server_by_group.end()) {
            const ModelPortion* p = srv->second;
            const int s_end = p->entry_index + p->size();
            if (layer >= p->entry_index && layer < s_end) {
              src = &p->layers[layer - p->entry_index];
            }
          }
        }
      }
      if (!src) {
        throw CoverageError("aggregate: layer " + std::to_string(layer) +
                            " covered by neither client " + std::to_string(c->client_id) +
                            " nor its server copy");
      }
      const Layer& tmpl = full_template.layers[layer];
      if (!src->weight.same_shape(tmpl.weight) || src->bias.size() != tmpl.bias.size()) {
        throw ShapeError("aggregate: layer " + std::to_string(layer) + " contribution of client " +
                         std::to_string(c->client_id) + " has the wrong shape");
      }
      if (c->data_size <= 0) {
        throw DomainError("aggregate: client " + std::to_string(c->client_id) +
                          " has non-positive data size");
      }
      sources.push_back({&src->weight, &src->bias});
      weights.push_back(static_cast<double>(c->data_size));
    }

    // Pass identical contributions through untouched: a weighted mean of equal
    // values should be that value to the last bit, not a rounded neighbour.
    bool all_same = true;
    for (std::size_t i = 1; i < sources.size(); ++i) {
      if (!(sources[i].weight->data == sources[0].weight->data &&
            *sources[i].bias == *sources[0].bias)) {
        all_same = false;
        break;
      }
    }
    Layer& dst = result.layers[layer];
    if (all_same) {
      dst.weight = *sources[0].weight;
      dst.bias = *sources[0].bias;
      continue;
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::fill(dst.weight.data.begin(), dst.weight.data.end(), 0.0);
    std::fill(dst.bias.begin(), dst.bias.end(), 0.0);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const double w = weights[i];
      const Matrix& wm = *sources[i].weight;
      for (std::size_t k = 0; k < dst.weight.data.size(); ++k) {
        dst.weight.data[k] += w * wm.data[k];
      }
      const std::vector<double>& bv = *sources[i].bias;
      for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] += w * bv[k];
    }
    for (double& v : dst.weight.data) v /= wsum;
    for (double& v : dst.bias) v /= wsum;
  }
  return result;
}

}  // namespace s2fl
