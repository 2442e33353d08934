#include "s2fl/device.hpp"

#include <algorithm>
#include <cmath>

#include "s2fl/errors.hpp"

namespace s2fl {

RoundTiming round_time(long long wc_bytes, long long p, long long q, const DeviceProfile& device,
                       double fc_per_sample, double fs_per_sample, const ServerProfile& server,
                       long long bytes_per_real, long long bytes_per_label) {
  if (device.flops <= 0.0 || device.transfer_rate <= 0.0) {
    throw DomainError("round_time: device flops and transfer rate must be positive");
  }
  if (server.flops <= 0.0) throw DomainError("round_time: server flops must be positive");
  if (p <= 0) throw DomainError("round_time: processed sample count must be positive");
  if (wc_bytes < 0 || q < 0 || fc_per_sample < 0.0 || fs_per_sample < 0.0) {
    throw DomainError("round_time: negative cost input");
  }
  RoundTiming t;
  t.client_id = device.client_id;
  t.bytes = 2 * wc_bytes + 2 * p * q * bytes_per_real;
  t.label_bytes = p * bytes_per_label;
  t.comm_seconds = static_cast<double>(t.bytes) / device.transfer_rate;
  t.client_compute_seconds = static_cast<double>(p) * fc_per_sample / device.flops;
  t.server_compute_seconds = static_cast<double>(p) * fs_per_sample / server.flops;
  t.total_seconds = t.comm_seconds + t.client_compute_seconds + t.server_compute_seconds;
  return t;
}

std::vector<DeviceProfile> make_fleet(const std::vector<FleetGroupSpec>& spec, std::uint64_t seed) {
  std::vector<DeviceProfile> fleet;
  for (const FleetGroupSpec& g : spec) {
    if (g.count < 0) throw ConfigError("make_fleet: negative device count");
    if (g.count > 0 && (g.flops <= 0.0 || g.transfer_rate <= 0.0)) {
      throw ConfigError("make_fleet: flops and transfer_rate must be positive");
    }
    for (int i = 0; i < g.count; ++i) {
      fleet.push_back({0, g.flops, g.transfer_rate});
    }
  }
  if (fleet.empty()) throw ConfigError("make_fleet: empty fleet");
  Rng rng(seed);
  rng.shuffle(fleet);
  for (std::size_t i = 0; i < fleet.size(); ++i) fleet[i].client_id = static_cast<int>(i);
  return fleet;
}

std::vector<FleetGroupSpec> fleet_preset(const std::string& name, int n_devices) {
  if (n_devices <= 0) throw ConfigError("fleet_preset: need at least one device");
  const double kFlops[3] = {2e10, 1e10, 5e9};  // High, Mid, Low
  const double kRates[3] = {5e6, 2e6, 1e6};

  std::vector<FleetGroupSpec> classes;
  std::vector<double> weights;
  if (name == "uniform" || name == "paper-uniform") {
    for (int f = 0; f < 3; ++f) {
      for (int r = 0; r < 3; ++r) {
        classes.push_back({kFlops[f], kRates[r], 0});
        weights.push_back(1.0);
      }
    }
  } else if (name == "conf1" || name == "conf2") {
    const bool one = name == "conf1";
    const double w[3] = {one ? 5.0 : 2.0, 3.0, one ? 2.0 : 5.0};  // High, Mid, Low
    for (int k = 0; k < 3; ++k) {
      classes.push_back({kFlops[k], kRates[k], 0});
      weights.push_back(w[k]);
    }
  } else {
    throw ConfigError("fleet_preset: unknown preset '" + name +
                      "' (expected uniform, conf1 or conf2)");
  }

  // Largest-remainder allocation of n_devices across the classes.
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::pair<double, int>> fracs;
  int assigned = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const double share = weights[i] / wsum * n_devices;
    classes[i].count = static_cast<int>(std::floor(share));
    assigned += classes[i].count;
    fracs.push_back({share - std::floor(share), static_cast<int>(i)});
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < n_devices - assigned; ++k) {
    classes[fracs[k % classes.size()].second].count += 1;
  }
  return classes;
}

}  // namespace s2fl
