#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "eal/dynsys.hpp"

using namespace eal;

namespace {

Rhs decay() {
  return [](double, const State& x) { return State{-x[0]}; };
}

double error_at_one(double dt) {
  const auto steps = static_cast<std::size_t>(std::lround(1.0 / dt));
  const Rhs f = [](double t, const State& x) { return State{x[1], -x[0] + std::cos(t)}; };
  const auto coarse = rk4_integrate(f, {1.0, 0.0}, 0.0, dt, steps);
  const auto fine = rk4_integrate(f, {1.0, 0.0}, 0.0, dt / 100.0, steps * 100);
  const auto a = coarse.row(steps), b = fine.row(steps * 100);
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST_CASE("rk4") {
  SUBCASE("zero field is constant") {
    const Rhs zero = [](double, const State& x) { return State(x.size(), 0.0); };
    const auto t = rk4_integrate(zero, {1.5, -2.0}, 0.0, 0.1, 10);
    CHECK(t.length() == 11);
    for (std::size_t i = 0; i < t.length(); ++i) {
      CHECK(t.at(i, 0) == 1.5);
      CHECK(t.at(i, 1) == -2.0);
    }
  }
  SUBCASE("exponential decay") {
    const auto t = rk4_integrate(decay(), {1.0}, 0.0, 0.01, 100);
    CHECK(std::abs(t.at(100, 0) - std::exp(-1.0)) < 1e-9);
    CHECK(t.time(100) == doctest::Approx(1.0));
  }
  SUBCASE("fourth-order convergence") {
    const double e1 = error_at_one(0.1), e2 = error_at_one(0.05);
    const double order = std::log2(e1 / e2);
    CHECK(order >= 3.7);
    CHECK(order <= 4.3);
  }
  SUBCASE("blowup names the step") {
    const Rhs explode = [](double, const State& x) { return State{x[0] * x[0]}; };
    try {
      rk4_integrate(explode, {1.0}, 0.0, 0.5, 100);
      FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }
}

TEST_CASE("lorenz") {
  const LorenzParams p;
  CHECK(lorenz_rhs({0, 0, 0}, p) == std::array<double, 3>{0, 0, 0});
  const auto r = lorenz_rhs({1, 1, 1}, p);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 26.0);
  CHECK(r[2] == doctest::Approx(1.0 - 8.0 / 3.0).epsilon(1e-15));
  const double c = std::sqrt(p.beta * (p.rho - 1.0));
  for (double s : {1.0, -1.0}) {
    const auto f = lorenz_rhs({s * c, s * c, p.rho - 1.0}, p);
    for (double v : f) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("bounded over a long run") {
    const auto t = rk4_integrate(lorenz_system(p), {1.0, 1.0, 1.0}, 0.0, 0.01, 100000);
    double peak = 0.0;
    for (double v : t.states) peak = std::max(peak, std::abs(v));
    CHECK(peak < 100.0);
  }
}

TEST_CASE("van der pol") {
  CHECK(vdp_rhs({0, 0}, 0.0, {5, 0, 7}) == std::array<double, 2>{0, 0});
  CHECK(vdp_rhs({1, 0}, 0.0, {5, 40, 7}) == std::array<double, 2>{0, 39});
  const auto chaotic = vdp_case("chaotic");
  CHECK(chaotic.a == 5.0);
  CHECK(chaotic.b == 3.0);
  CHECK(chaotic.omega == 1.788);
  CHECK(vdp_case("periodic").b == 40.0);
  CHECK(vdp_case("quasi-periodic").b == 15.0);
  CHECK_THROWS(vdp_case("laminar"));
  const auto t = rk4_integrate(vdp_system(chaotic), {1.0, 0.0}, 0.0, 0.01, 10000);
  CHECK(t.length() == 10001);
  for (double v : t.states) CHECK(std::isfinite(v));
}

TEST_CASE("phase-shifted sine stream") {
  SineDataset s;
  CHECK(s.phases == std::array<double, 3>{0.0, 1.0, 3.0});
  CHECK(s.value(0, 0.0) == 0.0);
  CHECK(s.value(1, 0.0) == std::sin(1.0));
  for (std::size_t t = s.first(); t <= s.last(); ++t) {
    const Tensor y = s.input(t);
    REQUIRE(y.shape() == Shape{3, 3});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(y.at(r, c)) <= 1.0);
        const double tt = static_cast<double>(t - 2 + r);
        CHECK(y.at(r, c) == std::sin(tt * M_PI / 2.0 + s.phases[c]));
      }
  }
}

TEST_CASE("windowing") {
  Trajectory ramp;
  ramp.dim = 1;
  for (int i = 0; i < 20; ++i) ramp.states.push_back(i);
  SUBCASE("length p+1 gives one window") {
    Trajectory shortr = ramp;
    shortr.states.resize(6);
    CHECK(window(shortr, 5).size() == 1);
    CHECK_THROWS(window(shortr, 6));
  }
  SUBCASE("ramp index audit") {
    const std::size_t p = 4;
    const auto w = window(ramp, p);
    REQUIRE(w.size() == 16);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w.targets[i] == static_cast<double>(i + p));
      for (std::size_t j = 0; j < p; ++j) CHECK(w.inputs[i * p + j] == static_cast<double>(i + j));
    }
    const auto strided = window(ramp, p, "train", 5);
    CHECK(strided.size() == 4);
    CHECK(strided.targets[1] == 9.0);
  }
  SUBCASE("batch assembly") {
    const auto w = window(ramp, 3);
    const Tensor x = w.batch_inputs({2, 7});
    const Tensor y = w.batch_targets({2, 7});
    CHECK(x.shape() == Shape{6, 1});
    CHECK(x.values() == std::vector<double>{2, 3, 4, 7, 8, 9});
    CHECK(y.values() == std::vector<double>{5, 10});
  }
  SUBCASE("full-scale window count per series") {
    Trajectory longt;
    longt.dim = 1;
    longt.states.assign(140000, 0.25);
    CHECK(window(longt, 64).size() == 140000 - 64);
  }
  SUBCASE("increment spread") {
    // constant increments fall back to unit spread
    CHECK(increment_spread(window(ramp, 3)) == std::vector<double>{1.0});
    Trajectory squares;
    squares.dim = 1;
    for (int i = 0; i < 10; ++i) squares.states.push_back(i * i);
    // increments 2i+1 for i = 2..8
    double m = 0.0, v = 0.0;
    for (int i = 2; i <= 8; ++i) m += 2 * i + 1;
    m /= 7.0;
    for (int i = 2; i <= 8; ++i) v += (2 * i + 1 - m) * (2 * i + 1 - m);
    const auto spread = increment_spread(window(squares, 3));
    REQUIRE(spread.size() == 1);
    CHECK(spread[0] == doctest::Approx(std::sqrt(v / 7.0)).epsilon(1e-12));
  }
}

TEST_CASE("lorenz corpus") {
  LorenzCorpusConfig c;
  c.steps = 600;
  c.test_steps = 400;
  c.transient = 100;
  c.seed = 17;
  const auto a = lorenz_corpus(c);
  const auto b = lorenz_corpus(c);
  REQUIRE(a.train.size() == 8);
  REQUIRE(a.validation.size() == 2);
  CHECK(a.train[0].length() == 600);
  CHECK(a.test.length() == 400);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].states == b.train[i].states);
  CHECK(a.test.states == b.test.states);

  c.seed = 18;
  CHECK(lorenz_corpus(c).train[0].states != a.train[0].states);

  // Test windows never coincide with any training or validation window.
  const std::size_t p = 8;
  std::set<std::vector<double>> seen;
  auto add_all = [&](const Trajectory& t) {
    const auto w = window(t, p);
    for (std::size_t i = 0; i < w.size(); ++i)
      seen.insert(std::vector<double>(w.inputs.begin() + i * p * 3, w.inputs.begin() + (i + 1) * p * 3));
  };
  for (const auto& t : a.train) add_all(t);
  for (const auto& t : a.validation) add_all(t);
  const auto test = window(a.test, p, "test");
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(seen.count(std::vector<double>(test.inputs.begin() + i * p * 3, test.inputs.begin() + (i + 1) * p * 3)) ==
          0);
  }
}

TEST_CASE("normalizer round trip") {
  Trajectory t;
  t.dim = 2;
  t.states = {1, 10, 2, 20, 3, 30, 4, 40};
  const auto n = Normalizer::fit({t});
  CHECK(n.mean == std::vector<double>{2.5, 25.0});
  const auto z = n.apply(t);
  double m0 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) m0 += z.at(i, 0);
  CHECK(std::abs(m0) < 1e-12);
  std::vector<double> row{3.0, 30.0};
  n.apply_row(row);
  n.invert_row(row);
  CHECK(row[0] == doctest::Approx(3.0));
  CHECK(row[1] == doctest::Approx(30.0));
}

TEST_CASE("trajectory csv round trip") {
  const auto t = rk4_integrate(lorenz_system({}), {1.0, 2.0, 3.0}, 0.5, 0.01, 50);
  const auto path = (std::filesystem::temp_directory_path() / "eal_traj_test.csv").string();
  write_trajectory_csv(path, t, {"x", "y", "z"});
  const auto back = read_trajectory_csv(path);
  CHECK(back.dim == 3);
  CHECK(back.states == t.states);
  CHECK(back.t0 == t.t0);
  CHECK(back.dt == doctest::Approx(t.dt));
  std::filesystem::remove(path);
}
