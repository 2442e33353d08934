// Command-line front end: execute a configured run or sweep, or invoke the
// reference oracles for reproducing test verdicts by hand.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "s2fl/experiment.hpp"
#include "s2fl/oracles.hpp"

namespace {

std::map<int, s2fl::LabelDistribution> parse_hists(const std::string& text) {
  std::map<int, s2fl::LabelDistribution> dists;
  int id = 0;
  s2fl::LabelDistribution current;
  std::string number;
  auto flush_number = [&]() {
    if (!number.empty()) {
      current.push_back(std::stoll(number));
      number.clear();
    }
  };
  for (char c : text) {
    if (c == ',') {
      flush_number();
    } else if (c == ';') {
      flush_number();
      dists[id++] = current;
      current.clear();
    } else if (c != ' ') {
      number += c;
    }
  }
  flush_number();
  if (!current.empty()) dists[id++] = current;
  return dists;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding split federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  CLI::App* cmd_run = app.add_subcommand("run", "Execute the base configuration");
  cmd_run->add_option("config", config_path, "Config file (key=value lines)")->required();
  cmd_run->add_option("--output-dir", output_dir, "Override the configured output directory");

  std::string sweep_config;
  std::string sweep_output;
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "Execute the full sweep grid");
  cmd_sweep->add_option("config", sweep_config, "Config file with sweep.<key> lines")->required();
  cmd_sweep->add_option("--output-dir", sweep_output, "Override the configured output directory");

  CLI::App* cmd_oracle = app.add_subcommand("oracle", "Reference oracles for test reproduction");
  cmd_oracle->require_subcommand(1);
  std::string hists;
  int group_size = 2;
  CLI::App* cmd_group = cmd_oracle->add_subcommand(
      "group", "Brute-force balanced grouping over label histograms");
  cmd_group->add_option("--hists", hists, "Histograms, e.g. \"4,0;0,4;4,0;0,4\"")->required();
  cmd_group->add_option("--group-size", group_size, "Maximum group size");
  std::vector<double> values, weights;
  CLI::App* cmd_agg = cmd_oracle->add_subcommand("aggregate", "Weighted mean of contributions");
  cmd_agg->add_option("--values", values, "Contribution values")->required()->delimiter(',');
  cmd_agg->add_option("--weights", weights, "Data-size weights")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_run || *cmd_sweep) {
      const bool with_sweep = static_cast<bool>(*cmd_sweep);
      s2fl::ExperimentSpec spec =
          s2fl::load_config(with_sweep ? sweep_config : config_path);
      const std::string& override_dir = with_sweep ? sweep_output : output_dir;
      if (!override_dir.empty()) spec.output_dir = override_dir;
      return s2fl::run_experiment(spec, with_sweep);
    }
    if (*cmd_group) {
      const auto dists = parse_hists(hists);
      const s2fl::OracleGrouping best = s2fl::brute_force_grouping(dists, group_size);
      std::printf("total_dist=%.17g\n", best.total_dist);
      for (std::size_t g = 0; g < best.groups.size(); ++g) {
        std::printf("group %zu:", g);
        for (int id : best.groups[g]) std::printf(" %d", id);
        std::printf("\n");
      }
      return 0;
    }
    if (*cmd_agg) {
      std::printf("weighted_mean=%.17g\n", s2fl::weighted_mean(values, weights));
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
