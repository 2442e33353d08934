#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "s2fl/dataset.hpp"
#include "s2fl/device.hpp"
#include "s2fl/fed_server.hpp"
#include "s2fl/main_server.hpp"
#include "s2fl/nn.hpp"

namespace s2fl {

enum class Mode { s2fl, sfl_vanilla, fedavg };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

// Every random draw of a run flows from the root seed through these substream
// tags (see derive_seed), so any single decision can be replayed in isolation
// and concurrency cannot perturb sampling. Batch streams take the tag plus
// round, step and client id; the round sampler takes the tag plus round.
namespace seedtag {
inline constexpr std::uint64_t kDataset = 1;
inline constexpr std::uint64_t kTestSplit = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kFleet = 4;
inline constexpr std::uint64_t kModelInit = 5;
inline constexpr std::uint64_t kSample = 6;      // + round
inline constexpr std::uint64_t kBatch = 7;       // + round, step, client
inline constexpr std::uint64_t kGroupOrder = 8;  // + round
}  // namespace seedtag

struct RunConfig {
  Mode mode = Mode::s2fl;
  int rounds = 100;
  int clients = 100;
  int sample_size = 10;
  double lr = 0.01;
  int batch_size = 128;
  int local_steps = 1;
  int group_size = 2;
  std::vector<int> split_candidates;  // empty: every interior layer boundary
  bool iid = false;
  double alpha = 0.5;
  std::uint64_t seed = 1;
  std::vector<FleetGroupSpec> fleet;  // empty: "uniform" preset over `clients` devices
  ServerProfile server;
  bool adaptive_split = true;
  bool data_balance = true;
  double ema_factor = 0.0;
  double l2 = 0.0;
  int n_classes = 5;
  int input_dim = 16;
  int samples_per_class = 200;
  std::vector<int> hidden_dims = {32, 32, 16};
  double test_fraction = 0.2;
};

// Resolve mode shorthands and check the cross-field invariants: sfl_vanilla is
// exactly the adaptive-off/balance-off/singleton-group/largest-split case, so
// it is normalized to those flags here and shares the whole code path.
RunConfig normalized(const RunConfig& config);

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  double global_loss = 0.0;
  double cum_seconds = 0.0;  // simulated wall-clock, cumulative
  long long cum_bytes = 0;   // client<->server traffic, cumulative
  SplitAssignment splits;    // empty in fedavg mode
  std::vector<std::vector<int>> groups;
  std::vector<double> group_distances;
};

struct RunResult {
  std::vector<RoundMetrics> metrics;
  FullModel final_model;
  ClientTimeTable table;
  std::vector<DeviceProfile> fleet;
};

// Execute the full round loop: sample participants, pick splits (sweeping the
// candidates during the first K rounds, median rule afterwards), run local
// steps with feature/gradient exchange and grouped server training, fuse the
// portions, advance the simulated clock by the slowest participant, and
// evaluate on the held-out test set. Deterministic for a fixed config.
RunResult run(const RunConfig& config);

// accuracy = fraction of argmax-correct rows (ties to the lowest class index);
// loss = mean cross-entropy.
std::pair<double, double> evaluate(const FullModel& model, const LabeledDataset& test);

struct ConvexReport {
  std::vector<double> gaps;  // gaps[t] = objective gap after round t; gaps[0] at init
  double fstar = 0.0;        // high-precision centralized optimum
  double envelope_c = 0.0;   // smallest C with gap <= C/(t + r_shift) on the fitted tail
  double r_shift = 0.0;      // max(8L/mu, E) - 1
  double l_smooth = 0.0;     // smoothness bound mu + lambda_max(moment matrix)/2
  int fit_from = 0;          // first round used for the envelope fit
};

// Strongly convex check: a single softmax layer with l2 = mu > 0 trained by
// the grouped round loop (clients upload raw inputs; full participation) under
// the decaying step size 2/(mu*(t + r_shift)). Reports the per-round
// optimality gap against a centralized full-batch solve. With full-shard
// batches and one local step the rounds reduce to exact centralized gradient
// descent, so the gap must shrink like C/t.
ConvexReport run_convex_sanity(const RunConfig& config);

}  // namespace s2fl
