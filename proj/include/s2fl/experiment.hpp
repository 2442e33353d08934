#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s2fl/orchestrator.hpp"

namespace s2fl {

// A parsed experiment description: the base run, an optional sweep grid, and
// output plumbing. Fleet presets are kept by name so a swept client count
// still resolves to the right device mix.
struct ExperimentSpec {
  RunConfig base;
  std::string fleet_name = "uniform";
  std::vector<FleetGroupSpec> fleet_spec;  // explicit mix; overrides fleet_name if non-empty
  std::vector<std::pair<std::string, std::vector<std::string>>> sweep;
  std::string output_dir = "runs";
  int repeats = 1;
  double target_accuracy = 0.8;
};

// Flat key=value format, one pair per line, '#' comments, later keys win.
// `include=<path>` splices another file (relative to the including file).
// `sweep.<key>=v1,v2,...` declares sweep values for any run-level key.
// Unknown keys and malformed values raise a config error naming the key.
ExperimentSpec load_config(const std::string& path);
ExperimentSpec parse_config_text(const std::string& text, const std::string& base_dir);

// Resolve one concrete run from the spec: apply sweep overrides (as key=value
// pairs), offset the seed by the repeat index, and expand the fleet preset.
RunConfig resolve_run(const ExperimentSpec& spec,
                      const std::vector<std::pair<std::string, std::string>>& overrides,
                      int repeat);

// Execute base x sweep x repeats (sweep only when with_sweep), writing one
// metrics CSV and one summary per run plus an aggregate comparison CSV.
// Returns the process exit code.
int run_experiment(const ExperimentSpec& spec, bool with_sweep);

// Metrics stream: round,accuracy,loss,cum_seconds,cum_bytes,splits,groups.
// splits cell: client:split pairs joined by ';'. groups cell: member ids
// joined by '|', then ':' and the group's balance distance, groups joined by
// ';'. Doubles print as %.17g so a reread is bit-exact.
void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& rows);
std::vector<RoundMetrics> read_metrics_csv(const std::string& path);

std::string format_double(double v);

}  // namespace s2fl
