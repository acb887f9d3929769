#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "eal/ops.hpp"
#include "eal/trainer.hpp"

using namespace eal;

namespace {

TransformerConfig tiny_transformer() {
  TransformerConfig c;
  c.p = 4;
  c.d = 3;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_width = 8;
  return c;
}

WindowedDataset lorenz_windows(std::size_t p, std::size_t rows) {
  const auto t = rk4_integrate(lorenz_system({}), {1.0, 1.0, 1.0}, 0.0, 0.01, rows - 1);
  const auto n = Normalizer::fit({t});
  return window(n.apply(t), p);
}

std::vector<std::vector<double>> snapshot(const Forecaster& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.push_back(p.value.values());
  return out;
}

class MiscountedModel : public Forecaster {
 public:
  MiscountedModel() : w_(Tensor::zeros({3, 3}, true)) {}
  Tensor forward(const Tensor& windows, std::size_t) const override { return windows; }
  std::vector<NamedTensor> parameters() const override { return {{"w", w_}}; }
  std::size_t formula_param_count() const override { return 10; }
  std::size_t window() const override { return 1; }
  std::size_t features() const override { return 3; }
  std::string name() const override { return "miscounted"; }

 private:
  Tensor w_;
};

}  // namespace

TEST_CASE("train spec validation") {
  TrainSpec s;
  s.epochs = 0;
  CHECK_THROWS(validate(s));
  s.epochs = 1;
  s.batch = 0;
  CHECK_THROWS(validate(s));
}

TEST_CASE("zero learning rate freezes the model") {
  Rng rng(1);
  Transformer model(tiny_transformer(), rng);
  const auto data = lorenz_windows(4, 60);
  const auto before = snapshot(model);
  TrainSpec spec;
  spec.optimizer.learning_rate = 0.0;
  spec.optimizer.kind = OptimizerKind::adam;
  spec.epochs = 4;
  spec.batch = 8;
  const auto report = train(model, data, spec);
  CHECK(snapshot(model) == before);
  REQUIRE(report.loss_curve.size() == 4);
  for (double l : report.loss_curve) CHECK(l == doctest::Approx(report.loss_curve[0]).epsilon(1e-12));
}

TEST_CASE("training is reproducible and reduces the loss") {
  const auto data = lorenz_windows(4, 120);
  TrainSpec spec;
  spec.optimizer.kind = OptimizerKind::adam;
  spec.optimizer.learning_rate = 1e-2;
  spec.epochs = 8;
  spec.batch = 16;
  spec.seed = 5;
  auto run = [&] {
    Rng rng(9);
    Transformer model(tiny_transformer(), rng);
    const auto report = train(model, data, spec);
    return std::make_pair(snapshot(model), report.loss_curve);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.second.back() < 0.5 * a.second.front());
}

TEST_CASE("subsampled epochs and cosine decay") {
  const auto data = lorenz_windows(4, 200);
  Rng rng(2);
  Lstm model({4, 3, 6}, rng);
  TrainSpec spec;
  spec.optimizer.kind = OptimizerKind::adam;
  spec.optimizer.learning_rate = 1e-2;
  spec.epochs = 3;
  spec.batch = 10;
  spec.samples_per_epoch = 40;
  spec.cosine_decay = true;
  const auto report = train(model, data, spec);
  CHECK(report.steps == 12);
  CHECK(report.seconds >= 0.0);
}

TEST_CASE("non-finite loss aborts with coordinates") {
  Tensor w = Tensor::vector({1.0}, true);
  TrainSpec spec;
  spec.epochs = 3;
  spec.batch = 1;
  std::size_t calls = 0;
  try {
    train_loop({w}, 4, spec, [&](const std::vector<std::size_t>&) {
      ++calls;
      return calls == 6 ? scale(sum(w), 1e308 * 10.0) : sum(w);
    });
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch 1") != std::string::npos);
  }
}

TEST_CASE("dataset and model must agree") {
  Rng rng(3);
  Transformer model(tiny_transformer(), rng);
  TrainSpec spec;
  CHECK_THROWS_AS(train(model, lorenz_windows(5, 50), spec), DimensionError);
}

TEST_CASE("parameter audit") {
  Rng rng(4);
  CHECK(audit_params(Attention({AttentionVariant::easy_dense, 3, 3, 1}, rng).parameters()) == 18);
  CHECK(audit_params(Attention({AttentionVariant::self, 3, 3, 1}, rng).parameters()) == 36);
  CHECK(audit_params(std::vector<NamedTensor>{}) == 0);

  TransformerConfig dense, sparse;
  sparse.attention = AttentionVariant::easy_sparse;
  const Transformer d(dense, rng), s(sparse, rng);
  CHECK(audit_params(d) - audit_params(s) == 16128);
  TransformerConfig self;
  self.attention = AttentionVariant::self;
  CHECK(audit_params(Transformer(self, rng)) == transformer_param_count(self));
  CHECK(audit_params(Lstm(LstmConfig{}, rng)) == lstm_param_count(LstmConfig{}));
  CHECK_THROWS_AS(audit_params(MiscountedModel()), std::logic_error);
}

TEST_CASE("interval evaluation") {
  const LorenzParams lp;
  const auto test = rk4_integrate(lorenz_system(lp), {6.0, 6.0, 6.0}, 0.0, 0.01, 3000).tail(500);
  const std::size_t p = 8;

  SUBCASE("oracle scores zero") {
    const auto r = evaluate_interval(oracle_step(lorenz_system(lp), 0.01), test, p);
    CHECK(r.anchors.size() == 4);
    CHECK(r.anchors[0] == p);
    CHECK(r.anchors[1] == p + 512);
    CHECK(r.error_percent == 0.0);
  }
  SUBCASE("persistence drifts") {
    const auto r = evaluate_interval(persistence_step(), test, p);
    CHECK(r.error_percent > 20.0);
    auto shuffled = r.per_anchor;
    std::reverse(shuffled.begin(), shuffled.end());
    double mean = 0.0;
    for (double e : shuffled) mean += e;
    mean /= static_cast<double>(shuffled.size());
    CHECK(mean == doctest::Approx(r.error_percent).epsilon(1e-14));
  }
  SUBCASE("anchor cap") {
    CHECK(evaluate_interval(persistence_step(), test, p, 512, 2).anchors.size() == 2);
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(evaluate_interval(persistence_step(), test.tail(test.length() - 100), p), DimensionError);
  }
}

TEST_CASE("rollout") {
  const LorenzParams lp;
  const auto ref = rk4_integrate(lorenz_system(lp), {1.0, 2.0, 3.0}, 0.0, 0.01, 400);
  const std::size_t p = 4;
  std::vector<State> seed;
  for (std::size_t i = 0; i < p; ++i) seed.push_back(ref.row(i));

  SUBCASE("oracle reproduces the reference") {
    const auto r = rollout(oracle_step(lorenz_system(lp), 0.01), seed, 396, ref.time(p), 0.01);
    CHECK(!r.truncated);
    REQUIRE(r.trajectory.length() == 396);
    for (std::size_t i = 0; i < 396; ++i) CHECK(r.trajectory.row(i) == ref.row(p + i));
  }
  SUBCASE("one step equals one forward call") {
    Rng rng(6);
    auto cfg = tiny_transformer();
    Transformer model(cfg, rng);
    const auto norm = Normalizer::identity(3);
    const auto r = rollout(model_step(model, norm), seed, 1, 0.0, 0.01);
    std::vector<double> flat;
    for (const auto& row : seed) flat.insert(flat.end(), row.begin(), row.end());
    const Tensor direct = model.forward(Tensor({p, 3}, flat), 1);
    CHECK(r.trajectory.states == direct.values());
  }
  SUBCASE("non-finite states truncate") {
    std::size_t calls = 0;
    const StepFn bad = [&](const std::vector<std::vector<State>>& w) {
      ++calls;
      return std::vector<State>(w.size(),
                                State(3, calls > 3 ? std::numeric_limits<double>::quiet_NaN() : 1.0));
    };
    const auto r = rollout(bad, seed, 10, 0.0, 0.01);
    CHECK(r.truncated);
    CHECK(r.trajectory.length() == 3);
  }
  SUBCASE("zero steps") { CHECK_THROWS(rollout(persistence_step(), seed, 0, 0.0, 0.01)); }
}
