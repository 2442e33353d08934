#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "s2fl/errors.hpp"
#include "s2fl/orchestrator.hpp"

using namespace s2fl;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.mode = Mode::s2fl;
  cfg.rounds = 6;
  cfg.clients = 6;
  cfg.sample_size = 4;
  cfg.lr = 0.05;
  cfg.batch_size = 16;
  cfg.local_steps = 1;
  cfg.group_size = 2;
  cfg.alpha = 0.5;
  cfg.seed = 11;
  cfg.n_classes = 3;
  cfg.input_dim = 6;
  cfg.samples_per_class = 40;
  cfg.hidden_dims = {8, 6};
  return cfg;
}

bool same_model(const FullModel& a, const FullModel& b) {
  if (a.num_layers() != b.num_layers()) return false;
  for (int i = 0; i < a.num_layers(); ++i) {
    const auto& la = a.layers[static_cast<std::size_t>(i)];
    const auto& lb = b.layers[static_cast<std::size_t>(i)];
    if (!(la.weight == lb.weight) || la.bias != lb.bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (Mode m : {Mode::s2fl, Mode::sfl_vanilla, Mode::fedavg}) {
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(mode_from_name("bogus"), ConfigError);
}

TEST_CASE("config validation catches out-of-range fields") {
  RunConfig cfg = small_config();
  cfg.sample_size = 7;  // > clients
  CHECK_THROWS_AS(normalized(cfg), ConfigError);
  cfg = small_config();
  cfg.rounds = 0;
  CHECK_THROWS_AS(normalized(cfg), ConfigError);
  cfg = small_config();
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(normalized(cfg), ConfigError);
  cfg = small_config();
  cfg.fleet = {{1e10, 1e6, 4}};  // describes 4 devices, clients = 6
  CHECK_THROWS_AS(normalized(cfg), ConfigError);

  cfg = small_config();
  cfg.mode = Mode::sfl_vanilla;
  const RunConfig norm = normalized(cfg);
  CHECK(norm.adaptive_split == false);
  CHECK(norm.data_balance == false);
  CHECK(norm.group_size == 1);
}

TEST_CASE("a run is bitwise deterministic in its config") {
  const RunConfig cfg = small_config();
  const RunResult a = run(cfg);
  const RunResult b = run(cfg);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].test_accuracy == b.metrics[i].test_accuracy);
    CHECK(a.metrics[i].global_loss == b.metrics[i].global_loss);
    CHECK(a.metrics[i].cum_seconds == b.metrics[i].cum_seconds);
    CHECK(a.metrics[i].cum_bytes == b.metrics[i].cum_bytes);
    CHECK(a.metrics[i].splits == b.metrics[i].splits);
    CHECK(a.metrics[i].groups == b.metrics[i].groups);
  }
  CHECK(same_model(a.final_model, b.final_model));

  RunConfig other = cfg;
  other.seed = 12;
  const RunResult c = run(other);
  CHECK(!same_model(a.final_model, c.final_model));
}

TEST_CASE("each round reports a consistent snapshot") {
  RunConfig cfg = small_config();
  cfg.rounds = 8;
  const RunResult res = run(cfg);
  REQUIRE(static_cast<int>(res.metrics.size()) == cfg.rounds);

  double prev_seconds = 0.0;
  long long prev_bytes = 0;
  for (const RoundMetrics& m : res.metrics) {
    // clock and traffic only move forward
    CHECK(m.cum_seconds > prev_seconds);
    CHECK(m.cum_bytes > prev_bytes);
    prev_seconds = m.cum_seconds;
    prev_bytes = m.cum_bytes;

    // split assignment covers exactly the sampled participants
    CHECK(static_cast<int>(m.splits.size()) == cfg.sample_size);
    std::set<int> in_groups;
    for (const std::vector<int>& g : m.groups) {
      CHECK(static_cast<int>(g.size()) <= cfg.group_size);
      for (int id : g) {
        CHECK(m.splits.count(id) == 1);
        CHECK(in_groups.insert(id).second);
      }
    }
    CHECK(in_groups.size() == m.splits.size());
    CHECK(m.test_accuracy >= 0.0);
    CHECK(m.test_accuracy <= 1.0);
    CHECK(std::isfinite(m.global_loss));
  }
}

TEST_CASE("warm-up sweeps the candidate list, then the table is populated") {
  RunConfig cfg = small_config();
  cfg.rounds = 5;
  cfg.hidden_dims = {8, 6};  // candidates default to {1, 2}
  const RunResult res = run(cfg);
  const std::vector<int> candidates = res.final_model.split_candidates;
  REQUIRE(candidates == std::vector<int>{1, 2});

  // rounds 1..K assign candidate k to every participant
  for (int k = 0; k < 2; ++k) {
    for (const auto& [id, s] : res.metrics[static_cast<std::size_t>(k)].splits) {
      CHECK(s == candidates[static_cast<std::size_t>(k)]);
    }
  }
  // afterwards every assignment is still a candidate
  for (std::size_t r = 2; r < res.metrics.size(); ++r) {
    for (const auto& [id, s] : res.metrics[r].splits) {
      CHECK(std::count(candidates.begin(), candidates.end(), s) == 1);
    }
  }
  // the table holds an entry for every (participant, assigned split) seen
  for (const RoundMetrics& m : res.metrics) {
    for (const auto& [id, s] : m.splits) CHECK(res.table.has(id, s));
  }
}

TEST_CASE("vanilla mode equals the flags-off configuration bitwise") {
  RunConfig a = small_config();
  a.mode = Mode::sfl_vanilla;

  RunConfig b = small_config();
  b.mode = Mode::s2fl;
  b.adaptive_split = false;
  b.data_balance = false;
  b.group_size = 1;

  const RunResult ra = run(a);
  const RunResult rb = run(b);
  CHECK(same_model(ra.final_model, rb.final_model));
  REQUIRE(ra.metrics.size() == rb.metrics.size());
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    CHECK(ra.metrics[i].test_accuracy == rb.metrics[i].test_accuracy);
    CHECK(ra.metrics[i].cum_seconds == rb.metrics[i].cum_seconds);
    CHECK(ra.metrics[i].cum_bytes == rb.metrics[i].cum_bytes);
    // vanilla always trains at the deepest candidate
    for (const auto& [id, s] : ra.metrics[i].splits) {
      CHECK(s == ra.final_model.split_candidates.back());
    }
    for (const std::vector<int>& g : ra.metrics[i].groups) CHECK(g.size() == 1);
  }
}

TEST_CASE("single-client fedavg reproduces plain sgd bitwise") {
  RunConfig cfg = small_config();
  cfg.mode = Mode::fedavg;
  cfg.clients = 1;
  cfg.sample_size = 1;
  cfg.rounds = 5;
  cfg.local_steps = 2;
  cfg.batch_size = 10;
  cfg.fleet = {{1e10, 1e6, 1}};
  const RunResult res = run(cfg);
  CHECK(res.metrics.back().splits.empty());  // no split bookkeeping in fedavg

  // replay: same dataset, same batches, one centralized model
  const LabeledDataset full = make_synthetic(cfg.n_classes, cfg.input_dim, cfg.samples_per_class,
                                             derive_seed(cfg.seed, {seedtag::kDataset}));
  const LabeledDataset train =
      split_train_test(full, cfg.test_fraction, derive_seed(cfg.seed, {seedtag::kTestSplit})).first;
  const std::vector<ClientShard> shards =
      partition_dirichlet(train, 1, cfg.alpha, derive_seed(cfg.seed, {seedtag::kPartition}));
  Rng model_rng = derive_rng(cfg.seed, {seedtag::kModelInit});
  FullModel model = make_dense_model(cfg.input_dim, cfg.hidden_dims, cfg.n_classes, {}, model_rng);

  for (int round = 1; round <= cfg.rounds; ++round) {
    ModelPortion portion{model.layers, 0};
    for (int step = 1; step <= cfg.local_steps; ++step) {
      Rng batch_rng = derive_rng(cfg.seed, {seedtag::kBatch, static_cast<std::uint64_t>(round),
                                            static_cast<std::uint64_t>(step), 0});
      const int n = static_cast<int>(shards[0].indices.size());
      std::vector<int> rows;
      if (n <= cfg.batch_size) {
        rows = shards[0].indices;
      } else {
        for (int k : batch_rng.sample_without_replacement(n, cfg.batch_size)) {
          rows.push_back(shards[0].indices[static_cast<std::size_t>(k)]);
        }
      }
      Matrix x(static_cast<int>(rows.size()), train.dim());
      std::vector<int> labels;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < train.dim(); ++c) x(static_cast<int>(r), c) = train.samples(rows[r], c);
        labels.push_back(train.labels[static_cast<std::size_t>(rows[r])]);
      }
      const ForwardCache cache = forward_portion(portion, x);
      const LossGrad lg = cross_entropy_loss(cache.outputs, labels);
      backward_portion(portion, cache, lg.dlogits, cfg.lr, cfg.l2);
    }
    model.layers = portion.layers;
  }
  CHECK(same_model(res.final_model, model));
}

TEST_CASE("one fedavg round with full participation equals the weighted mean") {
  RunConfig cfg = small_config();
  cfg.mode = Mode::fedavg;
  cfg.clients = 3;
  cfg.sample_size = 3;
  cfg.rounds = 1;
  cfg.fleet = {{1e10, 1e6, 3}};
  const RunResult res = run(cfg);

  // replay each client's lone local step independently, then average
  const LabeledDataset full = make_synthetic(cfg.n_classes, cfg.input_dim, cfg.samples_per_class,
                                             derive_seed(cfg.seed, {seedtag::kDataset}));
  const LabeledDataset train =
      split_train_test(full, cfg.test_fraction, derive_seed(cfg.seed, {seedtag::kTestSplit})).first;
  const std::vector<ClientShard> shards =
      partition_dirichlet(train, 3, cfg.alpha, derive_seed(cfg.seed, {seedtag::kPartition}));
  Rng model_rng = derive_rng(cfg.seed, {seedtag::kModelInit});
  const FullModel init = make_dense_model(cfg.input_dim, cfg.hidden_dims, cfg.n_classes, {},
                                          model_rng);

  std::vector<ClientContribution> contributions;
  for (int id = 0; id < 3; ++id) {
    ModelPortion portion{init.layers, 0};
    Rng batch_rng = derive_rng(cfg.seed, {seedtag::kBatch, 1, 1, static_cast<std::uint64_t>(id)});
    const int n = static_cast<int>(shards[static_cast<std::size_t>(id)].indices.size());
    std::vector<int> rows;
    if (n <= cfg.batch_size) {
      rows = shards[static_cast<std::size_t>(id)].indices;
    } else {
      for (int k : batch_rng.sample_without_replacement(n, cfg.batch_size)) {
        rows.push_back(shards[static_cast<std::size_t>(id)].indices[static_cast<std::size_t>(k)]);
      }
    }
    Matrix x(static_cast<int>(rows.size()), train.dim());
    std::vector<int> labels;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int c = 0; c < train.dim(); ++c) x(static_cast<int>(r), c) = train.samples(rows[r], c);
      labels.push_back(train.labels[static_cast<std::size_t>(rows[r])]);
    }
    const ForwardCache cache = forward_portion(portion, x);
    const LossGrad lg = cross_entropy_loss(cache.outputs, labels);
    backward_portion(portion, cache, lg.dlogits, cfg.lr, cfg.l2);
    contributions.push_back({id, portion,
                             static_cast<long long>(
                                 shards[static_cast<std::size_t>(id)].indices.size())});
  }
  const FullModel want = aggregate(contributions, {}, {}, init);
  CHECK(same_model(res.final_model, want));
}

TEST_CASE("evaluate scores argmax with ties to the lowest class") {
  // zero model: all logits equal, so every row predicts class 0
  FullModel model;
  Layer l;
  l.weight = Matrix(2, 3);
  l.bias = {0.0, 0.0};
  l.act = Activation::softmax_output;
  model.layers.push_back(l);

  LabeledDataset test;
  test.n_classes = 2;
  test.samples = Matrix(4, 3);
  test.labels = {0, 1, 0, 1};
  const auto [acc, loss] = evaluate(model, test);
  CHECK(acc == doctest::Approx(0.5));
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // bias tilts every row toward class 1
  model.layers[0].bias = {0.0, 5.0};
  const auto [acc2, loss2] = evaluate(model, test);
  CHECK(acc2 == doctest::Approx(0.5));
  CHECK(loss2 > loss);

  CHECK_THROWS_AS(evaluate(model, LabeledDataset{}), DomainError);
}

TEST_CASE("accuracy climbs on an easy iid problem") {
  RunConfig cfg = small_config();
  cfg.rounds = 30;
  cfg.iid = true;
  cfg.lr = 0.1;
  cfg.sample_size = 6;
  const RunResult res = run(cfg);
  CHECK(res.metrics.back().test_accuracy > res.metrics.front().test_accuracy);
  CHECK(res.metrics.back().test_accuracy > 0.8);
}

TEST_CASE("ema smoothing changes the table but keeps runs deterministic") {
  RunConfig cfg = small_config();
  cfg.rounds = 10;
  cfg.ema_factor = 0.5;
  const RunResult a = run(cfg);
  const RunResult b = run(cfg);
  for (const auto& [key, seconds] : a.table.entries) {
    CHECK(b.table.get(key.first, key.second) == seconds);
  }
}

TEST_CASE("convex sanity run shrinks the optimality gap") {
  RunConfig cfg;
  cfg.rounds = 40;
  cfg.clients = 3;
  cfg.sample_size = 3;
  cfg.group_size = 2;
  cfg.batch_size = 1 << 20;  // full-shard batches
  cfg.local_steps = 1;
  cfg.l2 = 0.5;
  cfg.alpha = 0.5;
  cfg.seed = 5;
  cfg.n_classes = 3;
  cfg.input_dim = 4;
  cfg.samples_per_class = 60;
  const ConvexReport report = run_convex_sanity(cfg);
  REQUIRE(static_cast<int>(report.gaps.size()) == cfg.rounds + 1);
  CHECK(report.gaps.front() > 0.0);
  CHECK(report.gaps.back() < 0.2 * report.gaps.front());
  // the decayed steps all sit below 1/L, so the descent is monotone
  for (std::size_t t = 1; t < report.gaps.size(); ++t) {
    CHECK(report.gaps[t] <= report.gaps[t - 1] + 1e-12);
  }
  for (double g : report.gaps) CHECK(g > -1e-9);
  CHECK(report.l_smooth > cfg.l2);
  CHECK(report.r_shift >= 0.0);

  RunConfig bad = cfg;
  bad.l2 = 0.0;
  CHECK_THROWS_AS(run_convex_sanity(bad), ConfigError);
}
