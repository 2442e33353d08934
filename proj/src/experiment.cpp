#include "s2fl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2fl/errors.hpp"

namespace s2fl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(trim(value), &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': invalid integer '" + value + "'");
  }
  if (used != trim(value).size()) {
    throw ConfigError("key '" + key + "': invalid integer '" + value + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(trim(value), &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': invalid number '" + value + "'");
  }
  if (used != trim(value).size()) {
    throw ConfigError("key '" + key + "': invalid number '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected on/off, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const std::string& part : split_on(value, ',')) {
    if (trim(part).empty()) continue;
    out.push_back(static_cast<int>(parse_int(key, part)));
  }
  return out;
}

std::vector<FleetGroupSpec> parse_fleet_spec(const std::string& key, const std::string& value) {
  std::vector<FleetGroupSpec> out;
  for (const std::string& part : split_on(value, ';')) {
    if (trim(part).empty()) continue;
    const std::vector<std::string> f = split_on(part, ':');
    if (f.size() != 3) {
      throw ConfigError("key '" + key + "': expected flops:rate:count, got '" + part + "'");
    }
    out.push_back({parse_real(key, f[0]), parse_real(key, f[1]),
                   static_cast<int>(parse_int(key, f[2]))});
  }
  return out;
}

void apply_key(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  RunConfig& b = spec.base;
  if (key == "mode") b.mode = mode_from_name(trim(value));
  else if (key == "rounds") b.rounds = static_cast<int>(parse_int(key, value));
  else if (key == "clients") b.clients = static_cast<int>(parse_int(key, value));
  else if (key == "sample_size") b.sample_size = static_cast<int>(parse_int(key, value));
  else if (key == "lr") b.lr = parse_real(key, value);
  else if (key == "batch_size") b.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "local_steps") b.local_steps = static_cast<int>(parse_int(key, value));
  else if (key == "group_size") b.group_size = static_cast<int>(parse_int(key, value));
  else if (key == "split_candidates") {
    b.split_candidates = trim(value) == "auto" ? std::vector<int>{} : parse_int_list(key, value);
  } else if (key == "alpha") {
    if (trim(value) == "iid") {
      b.iid = true;
    } else {
      b.iid = false;
      b.alpha = parse_real(key, value);
    }
  } else if (key == "seed") {
    b.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "fleet") {
    spec.fleet_name = trim(value);
    spec.fleet_spec.clear();
  } else if (key == "fleet_spec") {
    spec.fleet_spec = parse_fleet_spec(key, value);
  } else if (key == "server_flops") {
    b.server.flops = parse_real(key, value);
  } else if (key == "server_rate") {
    b.server.transfer_rate = parse_real(key, value);
  } else if (key == "adaptive_split") {
    b.adaptive_split = parse_bool(key, value);
  } else if (key == "data_balance") {
    b.data_balance = parse_bool(key, value);
  } else if (key == "ema_factor") {
    b.ema_factor = parse_real(key, value);
  } else if (key == "l2") {
    b.l2 = parse_real(key, value);
  } else if (key == "n_classes") {
    b.n_classes = static_cast<int>(parse_int(key, value));
  } else if (key == "input_dim") {
    b.input_dim = static_cast<int>(parse_int(key, value));
  } else if (key == "samples_per_class") {
    b.samples_per_class = static_cast<int>(parse_int(key, value));
  } else if (key == "hidden_dims") {
    b.hidden_dims = trim(value) == "none" ? std::vector<int>{} : parse_int_list(key, value);
  } else if (key == "test_fraction") {
    b.test_fraction = parse_real(key, value);
  } else if (key == "target_accuracy") {
    spec.target_accuracy = parse_real(key, value);
  } else if (key == "output_dir") {
    spec.output_dir = trim(value);
  } else if (key == "repeats") {
    spec.repeats = static_cast<int>(parse_int(key, value));
    if (spec.repeats < 1) throw ConfigError("key 'repeats': must be >= 1");
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

bool sweepable(const std::string& key) {
  static const std::vector<std::string> blocked = {"output_dir", "repeats", "target_accuracy"};
  return std::find(blocked.begin(), blocked.end(), key) == blocked.end();
}

void parse_into(ExperimentSpec& spec, const std::string& text, const std::string& base_dir,
                int depth) {
  if (depth > 8) throw ConfigError("include depth exceeded (cycle?)");
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "include") {
      const std::filesystem::path p = std::filesystem::path(base_dir) / value;
      std::ifstream f(p);
      if (!f) throw ConfigError("include: cannot open " + p.string());
      std::stringstream buf;
      buf << f.rdbuf();
      parse_into(spec, buf.str(), p.parent_path().string(), depth + 1);
    } else if (key.rfind("sweep.", 0) == 0) {
      const std::string field = key.substr(6);
      if (!sweepable(field)) throw ConfigError("key '" + field + "' cannot be swept");
      std::vector<std::string> values;
      for (const std::string& v : split_on(value, ',')) {
        if (!trim(v).empty()) values.push_back(trim(v));
      }
      if (values.empty()) throw ConfigError("key '" + key + "': empty sweep list");
      auto it = std::find_if(spec.sweep.begin(), spec.sweep.end(),
                             [&](const auto& e) { return e.first == field; });
      if (it == spec.sweep.end()) {
        spec.sweep.push_back({field, values});
      } else {
        it->second = values;
      }
    } else {
      apply_key(spec, key, value);
    }
  }
}

}  // namespace

ExperimentSpec parse_config_text(const std::string& text, const std::string& base_dir) {
  ExperimentSpec spec;
  parse_into(spec, text, base_dir, 0);
  return spec;
}

ExperimentSpec load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

RunConfig resolve_run(const ExperimentSpec& spec,
                      const std::vector<std::pair<std::string, std::string>>& overrides,
                      int repeat) {
  ExperimentSpec tmp = spec;
  for (const auto& [key, value] : overrides) apply_key(tmp, key, value);
  RunConfig cfg = tmp.base;
  cfg.seed = tmp.base.seed + static_cast<std::uint64_t>(repeat);
  cfg.fleet = tmp.fleet_spec.empty() ? fleet_preset(tmp.fleet_name, cfg.clients) : tmp.fleet_spec;
  return cfg;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string splits_cell(const SplitAssignment& splits) {
  std::string out;
  for (const auto& [id, s] : splits) {
    if (!out.empty()) out += ';';
    out += std::to_string(id) + ":" + std::to_string(s);
  }
  return out;
}

std::string groups_cell(const RoundMetrics& row) {
  std::string out;
  for (std::size_t g = 0; g < row.groups.size(); ++g) {
    if (!out.empty()) out += ';';
    std::string members;
    for (int id : row.groups[g]) {
      if (!members.empty()) members += '|';
      members += std::to_string(id);
    }
    out += members + ":" + format_double(row.group_distances[g]);
  }
  return out;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  std::fprintf(f, "round,accuracy,loss,cum_seconds,cum_bytes,splits,groups\n");
  for (const RoundMetrics& row : rows) {
    std::fprintf(f, "%d,%s,%s,%s,%lld,%s,%s\n", row.round,
                 format_double(row.test_accuracy).c_str(), format_double(row.global_loss).c_str(),
                 format_double(row.cum_seconds).c_str(), row.cum_bytes,
                 splits_cell(row.splits).c_str(), groups_cell(row).c_str());
  }
  std::fclose(f);
}

std::vector<RoundMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  std::vector<RoundMetrics> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_on(line, ',');
    if (cells.size() != 7) throw ConfigError("bad metrics row: " + line);
    RoundMetrics row;
    row.round = static_cast<int>(parse_int("round", cells[0]));
    row.test_accuracy = parse_real("accuracy", cells[1]);
    row.global_loss = parse_real("loss", cells[2]);
    row.cum_seconds = parse_real("cum_seconds", cells[3]);
    row.cum_bytes = parse_int("cum_bytes", cells[4]);
    if (!cells[5].empty()) {
      for (const std::string& pair : split_on(cells[5], ';')) {
        const std::vector<std::string> kv = split_on(pair, ':');
        if (kv.size() != 2) throw ConfigError("bad splits cell: " + cells[5]);
        row.splits[static_cast<int>(parse_int("splits", kv[0]))] =
            static_cast<int>(parse_int("splits", kv[1]));
      }
    }
    if (!cells[6].empty()) {
      for (const std::string& grp : split_on(cells[6], ';')) {
        const std::vector<std::string> md = split_on(grp, ':');
        if (md.size() != 2) throw ConfigError("bad groups cell: " + cells[6]);
        std::vector<int> members;
        for (const std::string& m : split_on(md[0], '|')) {
          members.push_back(static_cast<int>(parse_int("groups", m)));
        }
        row.groups.push_back(std::move(members));
        row.group_distances.push_back(parse_real("groups", md[1]));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_summary(const std::string& path, const std::string& label, const RunConfig& cfg,
                   const std::vector<RoundMetrics>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  const RoundMetrics& last = rows.back();
  std::fprintf(f, "label=%s\n", label.c_str());
  std::fprintf(f, "final_accuracy=%s\n", format_double(last.test_accuracy).c_str());
  std::fprintf(f, "final_loss=%s\n", format_double(last.global_loss).c_str());
  std::fprintf(f, "total_seconds=%s\n", format_double(last.cum_seconds).c_str());
  std::fprintf(f, "total_bytes=%lld\n", last.cum_bytes);
  std::fprintf(f, "rounds=%d\n", cfg.rounds);
  std::fprintf(f, "mode=%s\n", mode_name(cfg.mode).c_str());
  std::fprintf(f, "clients=%d\n", cfg.clients);
  std::fprintf(f, "sample_size=%d\n", cfg.sample_size);
  std::fprintf(f, "lr=%s\n", format_double(cfg.lr).c_str());
  std::fprintf(f, "batch_size=%d\n", cfg.batch_size);
  std::fprintf(f, "local_steps=%d\n", cfg.local_steps);
  std::fprintf(f, "group_size=%d\n", cfg.group_size);
  std::fprintf(f, "alpha=%s\n", cfg.iid ? "iid" : format_double(cfg.alpha).c_str());
  std::fprintf(f, "seed=%llu\n", static_cast<unsigned long long>(cfg.seed));
  std::fprintf(f, "adaptive_split=%s\n", cfg.adaptive_split ? "on" : "off");
  std::fprintf(f, "data_balance=%s\n", cfg.data_balance ? "on" : "off");
  std::fprintf(f, "l2=%s\n", format_double(cfg.l2).c_str());
  std::fprintf(f, "n_classes=%d\n", cfg.n_classes);
  std::fprintf(f, "input_dim=%d\n", cfg.input_dim);
  std::fprintf(f, "samples_per_class=%d\n", cfg.samples_per_class);
  std::fclose(f);
}

struct ComboStats {
  std::string label;
  RunConfig cfg;
  std::vector<double> final_accs;
  std::vector<double> total_seconds;
  std::vector<double> total_bytes;
  std::vector<double> target_seconds;  // only runs that reached the target
  std::vector<double> target_bytes;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

}  // namespace

int run_experiment(const ExperimentSpec& spec, bool with_sweep) {
  namespace fs = std::filesystem;
  std::string outdir = spec.output_dir;
  if (const char* env = std::getenv("S2FL_OUTPUT_DIR")) {
    if (*env) outdir = env;
  }
  fs::create_directories(outdir);

  std::vector<std::vector<std::pair<std::string, std::string>>> combos{{}};
  if (with_sweep) {
    for (const auto& [field, values] : spec.sweep) {
      std::vector<std::vector<std::pair<std::string, std::string>>> next;
      for (const auto& combo : combos) {
        for (const std::string& v : values) {
          auto extended = combo;
          extended.push_back({field, v});
          next.push_back(std::move(extended));
        }
      }
      combos = std::move(next);
    }
  }

  std::vector<ComboStats> stats;
  for (const auto& combo : combos) {
    ComboStats cs;
    cs.label = "base";
    if (!combo.empty()) {
      cs.label.clear();
      for (const auto& [k, v] : combo) {
        if (!cs.label.empty()) cs.label += "_";
        cs.label += k + "=" + v;
      }
    }
    for (int rep = 0; rep < spec.repeats; ++rep) {
      const RunConfig cfg = resolve_run(spec, combo, rep);
      if (rep == 0) cs.cfg = cfg;
      const std::string label = cs.label + "_rep" + std::to_string(rep);
      const RunResult result = run(cfg);
      write_metrics_csv((fs::path(outdir) / ("metrics_" + label + ".csv")).string(),
                        result.metrics);
      write_summary((fs::path(outdir) / ("summary_" + label + ".txt")).string(), label, cfg,
                    result.metrics);
      save_time_table(result.table, (fs::path(outdir) / ("time_table_" + label + ".csv")).string());
      const RoundMetrics& last = result.metrics.back();
      cs.final_accs.push_back(last.test_accuracy);
      cs.total_seconds.push_back(last.cum_seconds);
      cs.total_bytes.push_back(static_cast<double>(last.cum_bytes));
      for (const RoundMetrics& row : result.metrics) {
        if (row.test_accuracy >= spec.target_accuracy) {
          cs.target_seconds.push_back(row.cum_seconds);
          cs.target_bytes.push_back(static_cast<double>(row.cum_bytes));
          break;
        }
      }
    }
    stats.push_back(std::move(cs));
  }

  const std::string agg_path = (fs::path(outdir) / "aggregate.csv").string();
  std::FILE* f = std::fopen(agg_path.c_str(), "w");
  if (!f) throw ConfigError("cannot open " + agg_path + " for writing");
  std::fprintf(f,
               "label,mode,alpha,repeats,final_acc_mean,final_acc_std,seconds_total_mean,"
               "bytes_total_mean,reached_target,time_to_target_mean,bytes_to_target_mean\n");
  for (const ComboStats& cs : stats) {
    const std::string alpha = cs.cfg.iid ? "iid" : format_double(cs.cfg.alpha);
    std::fprintf(f, "%s,%s,%s,%d,%s,%s,%s,%s,%zu,%s,%s\n", cs.label.c_str(),
                 mode_name(cs.cfg.mode).c_str(), alpha.c_str(), spec.repeats,
                 format_double(mean_of(cs.final_accs)).c_str(),
                 format_double(std_of(cs.final_accs)).c_str(),
                 format_double(mean_of(cs.total_seconds)).c_str(),
                 format_double(mean_of(cs.total_bytes)).c_str(), cs.target_seconds.size(),
                 cs.target_seconds.empty() ? "" : format_double(mean_of(cs.target_seconds)).c_str(),
                 cs.target_bytes.empty() ? "" : format_double(mean_of(cs.target_bytes)).c_str());
  }
  std::fclose(f);
  return 0;
}

}  // namespace s2fl
