#include "s2fl/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "s2fl/errors.hpp"

namespace s2fl {

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::s2fl: return "s2fl";
    case Mode::sfl_vanilla: return "sfl_vanilla";
    case Mode::fedavg: return "fedavg";
  }
  return "?";
}

Mode mode_from_name(const std::string& name) {
  if (name == "s2fl") return Mode::s2fl;
  if (name == "sfl_vanilla") return Mode::sfl_vanilla;
  if (name == "fedavg") return Mode::fedavg;
  throw ConfigError("unknown mode '" + name + "' (expected s2fl, sfl_vanilla or fedavg)");
}

RunConfig normalized(const RunConfig& config) {
  RunConfig cfg = config;
  if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (cfg.clients < 1) throw ConfigError("clients must be >= 1");
  if (cfg.sample_size < 1 || cfg.sample_size > cfg.clients) {
    throw ConfigError("sample_size must be in [1, clients]");
  }
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.local_steps < 1) throw ConfigError("local_steps must be >= 1");
  if (cfg.group_size < 1) throw ConfigError("group_size must be >= 1");
  if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0) {
    throw ConfigError("test_fraction must be in [0, 1)");
  }
  if (!cfg.iid && cfg.alpha <= 0.0) throw ConfigError("alpha must be positive");
  if (cfg.mode == Mode::sfl_vanilla) {
    cfg.adaptive_split = false;
    cfg.data_balance = false;
    cfg.group_size = 1;
  }
  if (cfg.fleet.empty()) cfg.fleet = fleet_preset("uniform", cfg.clients);
  int fleet_total = 0;
  for (const FleetGroupSpec& g : cfg.fleet) fleet_total += g.count;
  if (fleet_total != cfg.clients) {
    throw ConfigError("fleet describes " + std::to_string(fleet_total) + " devices but clients=" +
                      std::to_string(cfg.clients));
  }
  return cfg;
}

namespace {

struct CandidateCost {
  long long wc_bytes = 0;
  long long q = 0;
  double fc = 0.0;
  double fs = 0.0;
};

Batch gather_batch(const LabeledDataset& train, const std::vector<int>& rows) {
  Batch b;
  b.inputs = Matrix(static_cast<int>(rows.size()), train.dim());
  b.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < train.dim(); ++c) {
      b.inputs(static_cast<int>(r), c) = train.samples(rows[r], c);
    }
    b.labels[r] = train.labels[rows[r]];
  }
  return b;
}

std::vector<int> draw_batch_rows(const ClientShard& shard, int batch_size, std::uint64_t seed,
                                 int round, int step, int client) {
  const int n = static_cast<int>(shard.indices.size());
  if (n <= batch_size) return shard.indices;
  Rng rng = derive_rng(seed, {seedtag::kBatch, static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(client)});
  const std::vector<int> pick = rng.sample_without_replacement(n, batch_size);
  std::vector<int> rows;
  rows.reserve(pick.size());
  for (int k : pick) rows.push_back(shard.indices[k]);
  return rows;
}

}  // namespace

std::pair<double, double> evaluate(const FullModel& model, const LabeledDataset& test) {
  if (test.size() == 0) throw DomainError("evaluate: empty test set");
  const ForwardCache cache = forward_span(model.layers, 0, test.samples);
  const Matrix& logits = cache.outputs;
  int correct = 0;
  for (int r = 0; r < logits.rows; ++r) {
    int arg = 0;
    for (int c = 1; c < logits.cols; ++c) {
      if (logits(r, c) > logits(r, arg)) arg = c;
    }
    if (arg == test.labels[r]) ++correct;
  }
  const LossGrad lg = cross_entropy_loss(logits, test.labels);
  return {static_cast<double>(correct) / test.size(), lg.loss};
}

RunResult run(const RunConfig& raw) {
  const RunConfig cfg = normalized(raw);
  const bool split_mode = cfg.mode != Mode::fedavg;

  const LabeledDataset full = make_synthetic(cfg.n_classes, cfg.input_dim, cfg.samples_per_class,
                                             derive_seed(cfg.seed, {seedtag::kDataset}));
  const auto [train, test] =
      split_train_test(full, cfg.test_fraction, derive_seed(cfg.seed, {seedtag::kTestSplit}));
  const std::vector<ClientShard> shards =
      cfg.iid ? partition_iid(train, cfg.clients, derive_seed(cfg.seed, {seedtag::kPartition}))
              : partition_dirichlet(train, cfg.clients, cfg.alpha,
                                    derive_seed(cfg.seed, {seedtag::kPartition}));
  const std::vector<DeviceProfile> fleet =
      make_fleet(cfg.fleet, derive_seed(cfg.seed, {seedtag::kFleet}));

  Rng model_rng = derive_rng(cfg.seed, {seedtag::kModelInit});
  FullModel model = make_dense_model(cfg.input_dim, cfg.hidden_dims, cfg.n_classes,
                                     cfg.split_candidates, model_rng);
  const std::vector<int>& candidates = model.split_candidates;
  if (split_mode && candidates.empty()) {
    throw ConfigError("split modes need at least one split candidate (a 2+ layer model)");
  }
  const int K = static_cast<int>(candidates.size());

  // Per-candidate communication and compute costs; these drive both the
  // simulated clock and the estimator for time-table cells that warm-up never
  // filled in (the estimate then equals what an observation would have been).
  std::vector<CandidateCost> costs(K);
  const long long full_flops = model.flops_per_sample();
  for (int k = 0; k < K; ++k) {
    const auto [client, server] = split_at(model, candidates[k]);
    costs[k].wc_bytes = client.param_bytes();
    costs[k].q = client.output_dim();
    costs[k].fc = static_cast<double>(client.flops_per_sample());
    costs[k].fs = static_cast<double>(full_flops) - costs[k].fc;
  }
  std::vector<long long> batch_of(cfg.clients);
  for (int i = 0; i < cfg.clients; ++i) {
    batch_of[i] = std::min<long long>(cfg.batch_size, shards[i].indices.size());
  }
  auto estimate_cell = [&](int client, int split) {
    const int k = static_cast<int>(std::find(candidates.begin(), candidates.end(), split) -
                                   candidates.begin());
    const long long p = cfg.local_steps * batch_of[client];
    return round_time(costs[k].wc_bytes, p, costs[k].q, fleet[client], costs[k].fc, costs[k].fs,
                      cfg.server)
        .total_seconds;
  };

  ClientTimeTable table;
  table.ema_factor = cfg.ema_factor;
  RunResult result;
  double cum_seconds = 0.0;
  long long cum_bytes = 0;

  for (int round = 1; round <= cfg.rounds; ++round) {
    Rng sample_rng = derive_rng(cfg.seed, {seedtag::kSample, static_cast<std::uint64_t>(round)});
    std::vector<int> participants = sample_rng.sample_without_replacement(cfg.clients,
                                                                          cfg.sample_size);
    std::sort(participants.begin(), participants.end());

    SplitAssignment splits;
    if (split_mode) {
      if (!cfg.adaptive_split) {
        for (int id : participants) splits[id] = candidates.back();
      } else if (round <= K) {
        const int s = candidates[warmup_split(round, K) - 1];
        for (int id : participants) splits[id] = s;
      } else {
        splits = select_splits(table, participants, candidates, estimate_cell);
      }
    }

    std::map<int, ModelPortion> client_portions;
    for (int id : participants) {
      if (split_mode) {
        client_portions[id] = split_model(model, splits[id]).first;
      } else {
        client_portions[id] = ModelPortion{model.layers, 0};
      }
    }

    Grouping grouping;
    std::map<int, int> membership;
    std::vector<GroupTrainState> states;
    if (split_mode) {
      std::map<int, LabelDistribution> hists;
      for (int id : participants) hists[id] = shards[id].label_histogram;
      if (cfg.data_balance) {
        grouping = group_clients(hists, cfg.group_size);
      } else {
        std::vector<int> order = participants;
        Rng order_rng =
            derive_rng(cfg.seed, {seedtag::kGroupOrder, static_cast<std::uint64_t>(round)});
        order_rng.shuffle(order);
        grouping = group_in_order(order, hists, cfg.group_size);
      }
      for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
        int entry = model.num_layers();
        for (int id : grouping.groups[g]) {
          membership[id] = static_cast<int>(g);
          entry = std::min(entry, splits[id]);
        }
        GroupTrainState state;
        state.group_id = static_cast<int>(g);
        state.server_portion.entry_index = entry;
        state.server_portion.layers.assign(model.layers.begin() + entry, model.layers.end());
        for (int id : grouping.groups[g]) state.member_entries[id] = splits[id];
        states.push_back(std::move(state));
      }
    }

    for (int step = 1; step <= cfg.local_steps; ++step) {
      std::map<int, ForwardCache> caches;
      std::vector<std::vector<FeaturePacket>> packets(states.size());
      for (int id : participants) {
        const std::vector<int> rows = draw_batch_rows(shards[id], cfg.batch_size, cfg.seed,
                                                      round, step, id);
        const Batch batch = gather_batch(train, rows);
        ModelPortion& portion = client_portions[id];
        if (!split_mode) {
          const ForwardCache cache = forward_portion(portion, batch.inputs);
          const LossGrad lg = cross_entropy_loss(cache.outputs, batch.labels);
          backward_portion(portion, cache, lg.dlogits, cfg.lr, cfg.l2);
          continue;
        }
        ForwardCache cache = forward_portion(portion, batch.inputs);
        FeaturePacket packet;
        packet.client_id = id;
        packet.features = cache.outputs;
        packet.labels = batch.labels;
        packet.entry_index = splits[id];
        packets[membership[id]].push_back(std::move(packet));
        caches[id] = std::move(cache);
      }
      for (std::size_t g = 0; g < states.size(); ++g) {
        const GroupTrainResult res = train_group(states[g], packets[g], cfg.lr, cfg.l2);
        for (int id : grouping.groups[g]) {
          backward_portion(client_portions[id], caches[id], res.feature_grads.at(id), cfg.lr,
                           cfg.l2);
        }
      }
    }

    std::vector<ClientContribution> contributions;
    for (int id : participants) {
      contributions.push_back(
          {id, client_portions[id], static_cast<long long>(shards[id].indices.size())});
    }
    std::vector<ServerPortionEntry> server_entries;
    for (GroupTrainState& state : states) {
      server_entries.push_back({state.group_id, std::move(state.server_portion)});
    }
    model = aggregate(contributions, server_entries, membership, model);

    double wall = 0.0;
    for (int id : participants) {
      const long long p = cfg.local_steps * batch_of[id];
      RoundTiming t;
      if (split_mode) {
        const int k = static_cast<int>(
            std::find(candidates.begin(), candidates.end(), splits[id]) - candidates.begin());
        t = round_time(costs[k].wc_bytes, p, costs[k].q, fleet[id], costs[k].fc, costs[k].fs,
                       cfg.server);
        record_time(table, id, splits[id], t.total_seconds);
      } else {
        t = round_time(model.param_bytes(), p, 0, fleet[id],
                       static_cast<double>(full_flops), 0.0, cfg.server, kBytesPerReal, 0);
      }
      wall = std::max(wall, t.total_seconds);
      cum_bytes += t.bytes + t.label_bytes;
    }
    cum_seconds += wall;

    const auto [acc, loss] = evaluate(model, test);
    RoundMetrics row;
    row.round = round;
    row.test_accuracy = acc;
    row.global_loss = loss;
    row.cum_seconds = cum_seconds;
    row.cum_bytes = cum_bytes;
    row.splits = splits;
    row.groups = grouping.groups;
    row.group_distances = grouping.distances;
    result.metrics.push_back(std::move(row));
  }

  result.final_model = std::move(model);
  result.table = std::move(table);
  result.fleet = fleet;
  return result;
}

namespace {

// Largest eigenvalue of the mean augmented second-moment matrix of the rows of
// X (bias coordinate appended), by power iteration.
double moment_lambda_max(const Matrix& x) {
  const int d = x.cols + 1;
  Matrix m(d, d);
  for (int r = 0; r < x.rows; ++r) {
    for (int a = 0; a < d; ++a) {
      const double va = a < x.cols ? x(r, a) : 1.0;
      for (int b = 0; b < d; ++b) {
        const double vb = b < x.cols ? x(r, b) : 1.0;
        m(a, b) += va * vb;
      }
    }
  }
  for (double& v : m.data) v /= x.rows;
  std::vector<double> v(d, 1.0), mv(d, 0.0);
  double lambda = 0.0;
  for (int iter = 0; iter < 300; ++iter) {
    for (int a = 0; a < d; ++a) {
      double acc = 0.0;
      for (int b = 0; b < d; ++b) acc += m(a, b) * v[b];
      mv[a] = acc;
    }
    double norm = 0.0;
    for (double u : mv) norm += u * u;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (int a = 0; a < d; ++a) v[a] = mv[a] / norm;
    lambda = norm;
  }
  return lambda;
}

double objective(const ModelPortion& portion, const LabeledDataset& train, double l2) {
  const ForwardCache cache = forward_portion(portion, train.samples);
  const LossGrad lg = cross_entropy_loss(cache.outputs, train.labels);
  double reg = 0.0;
  for (const Layer& layer : portion.layers) {
    for (double w : layer.weight.data) reg += w * w;
    for (double b : layer.bias) reg += b * b;
  }
  return lg.loss + 0.5 * l2 * reg;
}

// Full-batch gradient descent at the safe step 1/L until the gradient is flat
// to near machine precision; the result stands in for the exact optimum.
double solve_optimum(ModelPortion portion, const LabeledDataset& train, double l2, double lsmooth) {
  for (int iter = 0; iter < 200000; ++iter) {
    const ForwardCache cache = forward_portion(portion, train.samples);
    const LossGrad lg = cross_entropy_loss(cache.outputs, train.labels);
    PortionGradients grads = zero_gradients(portion.layers);
    backward_span(portion.layers, 0, cache, lg.dlogits, 1.0, grads);
    double gmax = 0.0;
    for (std::size_t k = 0; k < portion.layers.size(); ++k) {
      const Layer& layer = portion.layers[k];
      for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
        gmax = std::max(gmax, std::abs(grads.dweight[k].data[i] + l2 * layer.weight.data[i]));
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        gmax = std::max(gmax, std::abs(grads.dbias[k][i] + l2 * layer.bias[i]));
      }
    }
    if (gmax <= 1e-12) break;
    apply_sgd(portion, grads, 1.0 / lsmooth, l2);
  }
  return objective(portion, train, l2);
}

}  // namespace

ConvexReport run_convex_sanity(const RunConfig& raw) {
  RunConfig cfg = raw;
  cfg.mode = Mode::s2fl;
  cfg.hidden_dims.clear();  // single softmax layer => strongly convex with l2 > 0
  cfg.split_candidates.clear();
  if (cfg.l2 <= 0.0) throw ConfigError("run_convex_sanity: l2 (the strong-convexity mu) must be > 0");
  const RunConfig base = [&] {
    RunConfig c = cfg;
    c.sample_size = cfg.clients;  // full participation keeps every round an exact descent step
    return normalized(c);
  }();

  const LabeledDataset full = make_synthetic(base.n_classes, base.input_dim,
                                             base.samples_per_class,
                                             derive_seed(base.seed, {seedtag::kDataset}));
  const LabeledDataset train =
      split_train_test(full, base.test_fraction, derive_seed(base.seed, {seedtag::kTestSplit}))
          .first;
  const std::vector<ClientShard> shards =
      base.iid ? partition_iid(train, base.clients, derive_seed(base.seed, {seedtag::kPartition}))
               : partition_dirichlet(train, base.clients, base.alpha,
                                     derive_seed(base.seed, {seedtag::kPartition}));

  Rng model_rng = derive_rng(base.seed, {seedtag::kModelInit});
  FullModel model = make_dense_model(base.input_dim, {}, base.n_classes, {}, model_rng);

  const double mu = base.l2;
  // Softmax cross-entropy has curvature at most 1/2 per sample, so
  // mu + lambda_max/2 bounds the smoothness of the regularized objective.
  const double lsmooth = mu + 0.5 * moment_lambda_max(train.samples);
  const double r_shift = std::max(8.0 * lsmooth / mu, static_cast<double>(base.local_steps)) - 1.0;

  ConvexReport report;
  report.l_smooth = lsmooth;
  report.r_shift = r_shift;
  report.fstar = solve_optimum(ModelPortion{model.layers, 0}, train, mu, lsmooth);
  report.gaps.push_back(objective(ModelPortion{model.layers, 0}, train, mu) - report.fstar);

  std::vector<int> participants(base.clients);
  std::iota(participants.begin(), participants.end(), 0);
  std::map<int, LabelDistribution> hists;
  for (int id : participants) hists[id] = shards[id].label_histogram;
  const Grouping grouping = group_clients(hists, base.group_size);

  long long t_step = 0;
  for (int round = 1; round <= base.rounds; ++round) {
    std::vector<GroupTrainState> states;
    std::map<int, int> membership;
    for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
      GroupTrainState state;
      state.group_id = static_cast<int>(g);
      state.server_portion = ModelPortion{model.layers, 0};
      for (int id : grouping.groups[g]) {
        state.member_entries[id] = 0;
        membership[id] = static_cast<int>(g);
      }
      states.push_back(std::move(state));
    }
    for (int step = 1; step <= base.local_steps; ++step) {
      ++t_step;
      const double lr = 2.0 / (mu * (static_cast<double>(t_step) + r_shift));
      for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
        std::vector<FeaturePacket> packets;
        for (int id : grouping.groups[g]) {
          const std::vector<int> rows = draw_batch_rows(shards[id], base.batch_size, base.seed,
                                                        round, step, id);
          const Batch batch = gather_batch(train, rows);
          packets.push_back({id, batch.inputs, batch.labels, 0});
        }
        train_group(states[g], packets, lr, mu);
      }
    }
    std::vector<ClientContribution> contributions;
    for (int id : participants) {
      contributions.push_back(
          {id, ModelPortion{{}, 0}, static_cast<long long>(shards[id].indices.size())});
    }
    std::vector<ServerPortionEntry> server_entries;
    for (GroupTrainState& state : states) {
      server_entries.push_back({state.group_id, std::move(state.server_portion)});
    }
    model = aggregate(contributions, server_entries, membership, model);
    report.gaps.push_back(objective(ModelPortion{model.layers, 0}, train, mu) - report.fstar);
  }

  report.fit_from = std::min(50, base.rounds);
  for (int t = report.fit_from; t <= base.rounds; ++t) {
    report.envelope_c = std::max(report.envelope_c, report.gaps[t] * (t + r_shift));
  }
  return report;
}

}  // namespace s2fl
