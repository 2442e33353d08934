#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "s2fl/nn.hpp"

namespace s2fl {

// Latest observed round seconds per (client, split candidate). With
// ema_factor f > 0 an update blends f of the old value into the new one
// (f = 0 keeps only the most recent observation).
struct ClientTimeTable {
  std::map<std::pair<int, int>, double> entries;
  double ema_factor = 0.0;

  bool has(int client_id, int split_index) const {
    return entries.count({client_id, split_index}) > 0;
  }
  double get(int client_id, int split_index) const {
    return entries.at({client_id, split_index});
  }
};

void record_time(ClientTimeTable& table, int client_id, int split_index, double seconds);

// CSV with header client_id,split_index,seconds; values round-trip bit-exactly.
void save_time_table(const ClientTimeTable& table, const std::string& path);
ClientTimeTable load_time_table(const std::string& path);

using SplitAssignment = std::map<int, int>;  // client_id -> split candidate

// During the first K rounds every participant trains the same candidate so the
// table gets one observation per column: round k exercises the k-th candidate.
// Returns the 1-based position within the candidate list.
int warmup_split(int round, int K);

// The sliding rule: pool every participant's time for every candidate (table
// value if present, otherwise the estimate callback, which should evaluate the
// timing model for that device), take the median of the pooled times (even
// count: mean of the two middle values), and give each device the candidate
// whose time lies closest to the median. Ties go to the larger candidate,
// keeping more layers client-side. The result does not depend on the order of
// `participants`.
SplitAssignment select_splits(const ClientTimeTable& table, const std::vector<int>& participants,
                              const std::vector<int>& candidates,
                              const std::function<double(int, int)>& estimate);

struct ClientContribution {
  int client_id = 0;
  ModelPortion portion;  // entry_index 0
  long long data_size = 0;
};

struct ServerPortionEntry {
  int group_id = 0;
  ModelPortion portion;
};

// Layer-wise weighted model fusion. For every layer of the full model, each
// client contributes its own copy when its portion holds that layer and its
// group's server copy otherwise, weighted by the client's data size; the
// accumulated sum is divided by the accumulated weight. A layer whose
// contributions are all bitwise identical is passed through exactly, so a
// lone trainer's update survives aggregation unchanged.
FullModel aggregate(const std::vector<ClientContribution>& client_models,
                    const std::vector<ServerPortionEntry>& server_models,
                    const std::map<int, int>& membership, const FullModel& full_template);

}  // namespace s2fl
