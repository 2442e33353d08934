#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2fl/nn.hpp"

namespace s2fl {

struct DeviceProfile {
  int client_id = 0;
  double flops = 0.0;          // device compute, FLOP/s
  double transfer_rate = 0.0;  // link speed, bytes/s
};

struct ServerProfile {
  double flops = 5e10;
  double transfer_rate = 1e7;
};

struct RoundTiming {
  int client_id = 0;
  int split_index = 0;
  double comm_seconds = 0.0;
  double client_compute_seconds = 0.0;
  double server_compute_seconds = 0.0;
  double total_seconds = 0.0;
  long long bytes = 0;        // model down+up plus feature up / gradient down
  long long label_bytes = 0;  // label upload, tracked separately from the model/feature payload
};

// Timing model for one device-round: (2*wc + 2*p*q*bytes_per_real)/R for the
// client-portion exchange plus the feature/gradient exchange, p*fc/device
// FLOPS for the client portion and p*fs/server FLOPS for the server portion.
// fc and fs are per-sample costs; p counts every sample the device pushes
// through in the round (batch size times local steps).
RoundTiming round_time(long long wc_bytes, long long p, long long q, const DeviceProfile& device,
                       double fc_per_sample, double fs_per_sample, const ServerProfile& server,
                       long long bytes_per_real = kBytesPerReal,
                       long long bytes_per_label = kBytesPerLabel);

struct FleetGroupSpec {
  double flops = 0.0;
  double transfer_rate = 0.0;
  int count = 0;
};

// Expand group specs into individual devices and shuffle them with the seeded
// RNG so capability is not correlated with client id. Ids run 0..n-1.
std::vector<DeviceProfile> make_fleet(const std::vector<FleetGroupSpec>& spec, std::uint64_t seed);

// Named device mixes over the three capability tiers
//   High 2e10 FLOP/s, Mid 1e10, Low 5e9 and link speeds 5e6, 2e6, 1e6 B/s.
// "uniform" (alias "paper-uniform"): all nine FLOPS x rate combinations, evenly.
// "conf1": High:Mid:Low = 5:3:2, each tier paired with its matching link.
// "conf2": High:Mid:Low = 2:3:5.
// Counts are allocated by largest remainder over the tier weights.
std::vector<FleetGroupSpec> fleet_preset(const std::string& name, int n_devices);

}  // namespace s2fl
