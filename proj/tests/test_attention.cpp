#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eal/attention.hpp"
#include "eal/ops.hpp"
#include "gradcheck.hpp"

using namespace eal;
using eal::testing::gradcheck;
using eal::testing::probe;
using eal::testing::random_tensor;

namespace {

void overwrite(Tensor& t, const std::vector<double>& v) {
  REQUIRE(v.size() == t.size());
  std::copy(v.begin(), v.end(), t.mutable_data().begin());
}

std::vector<double> identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("self attention with zero logits averages the values") {
  Rng rng(1);
  Attention att({AttentionVariant::self, 3, 3, 1}, rng);
  overwrite(att.w_q, std::vector<double>(9, 0.0));
  overwrite(att.w_k, std::vector<double>(9, 0.0));
  overwrite(att.w_v, identity(3));
  overwrite(att.w_c, identity(3));
  const Tensor x = Tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9.5});
  Tensor scores;
  const Tensor y = att.forward(x, 1, &scores);
  for (double s : scores.data()) CHECK(s == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double col_mean = (x.at(0, c) + x.at(1, c) + x.at(2, c)) / 3.0;
      CHECK(std::abs(y.at(r, c) - col_mean) < 1e-14);
    }
  }
}

TEST_CASE("sine-scale parameter counts") {
  CHECK(attention_param_count({AttentionVariant::self, 3, 3, 1}) == 36);
  CHECK(attention_param_count({AttentionVariant::easy_dense, 3, 3, 1}) == 18);
  Rng rng(2);
  for (auto v : {AttentionVariant::self, AttentionVariant::easy_dense}) {
    Attention att({v, 3, 3, 1}, rng);
    std::size_t total = 0;
    for (const auto& p : att.parameters()) {
      CHECK(p.value.requires_grad());
      total += p.value.size();
    }
    CHECK(total == attention_param_count(att.config()));
  }
}

TEST_CASE("self attention scores match a scalar-loop oracle") {
  for (std::size_t heads : {1u, 2u}) {
    Rng rng(40 + heads);
    const std::size_t n = 5, d = 4, k = d / heads;
    Attention att({AttentionVariant::self, n, d, heads}, rng);
    const Tensor x = random_tensor({n, d}, rng, false, -2.0, 2.0);
    Tensor scores;
    const Tensor y = att.forward(x, 1, &scores);
    REQUIRE(scores.shape() == Shape{heads, n, n});

    auto proj = [&](const Tensor& w, std::size_t t, std::size_t col) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += x.at(t, j) * w.at(j, col);
      return s;
    };
    std::vector<double> merged(n * d, 0.0);
    double worst_alpha = 0.0;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t c = hd * k; c < (hd + 1) * k; ++c) dot += proj(att.w_q, i, c) * proj(att.w_k, j, c);
          logits[j] = dot / std::sqrt(static_cast<double>(k));
        }
        double denom = 0.0;
        for (double l : logits) denom += std::exp(l);
        for (std::size_t j = 0; j < n; ++j) {
          const double alpha = std::exp(logits[j]) / denom;
          worst_alpha = std::max(worst_alpha, std::abs(alpha - scores.at((hd * n + i) * n + j)));
          for (std::size_t c = hd * k; c < (hd + 1) * k; ++c) merged[i * d + c] += alpha * proj(att.w_v, j, c);
        }
      }
    }
    CHECK(worst_alpha < 1e-12);
    std::vector<double> expect(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t j = 0; j < d; ++j) expect[i * d + c] += merged[i * d + j] * att.w_c.at(j, c);
    CHECK(max_abs_diff(y.values(), expect) < 1e-12);
  }
}

TEST_CASE("self attention rows sum to one") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Attention att({AttentionVariant::self, 6, 4, 2}, rng);
    const Tensor x = random_tensor({18, 4}, rng, false, -10.0, 10.0);
    Tensor scores;
    att.forward(x, 3, &scores);
    REQUIRE(scores.shape() == Shape{6, 6, 6});
    for (std::size_t r = 0; r < 36; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) total += scores.at(r * 6 + c);
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("easy attention identity case") {
  Rng rng(4);
  Attention att({AttentionVariant::easy_dense, 3, 3, 1}, rng);
  overwrite(att.alpha_dense, identity(3));
  overwrite(att.w_value, identity(3));
  const Tensor x = Tensor::matrix(3, 3, {1, -2, 3, 4, 5, -6, 7, 8, 9});
  CHECK(att.forward(x, 1).values() == x.values());
}

TEST_CASE("easy attention matches a double-loop oracle") {
  for (std::size_t heads : {1u, 2u, 4u}) {
    Rng rng(50 + heads);
    const std::size_t n = 4, d = 4, k = d / heads, batch = 2;
    Attention att({AttentionVariant::easy_dense, n, d, heads}, rng);
    const Tensor x = random_tensor({batch * n, d}, rng, false);
    const Tensor y = att.forward(x, batch);
    std::vector<double> expect(batch * n * d, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t hd = 0; hd < heads; ++hd)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = hd * k; c < (hd + 1) * k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              double v = 0.0;
              for (std::size_t m = 0; m < d; ++m) v += x.at(b * n + j, m) * att.w_value.at(m, c);
              s += att.alpha_dense.at((hd * n + i) * n + j) * v;
            }
            expect[(b * n + i) * d + c] = s;
          }
    CHECK(max_abs_diff(y.values(), expect) < 1e-12);
  }
}

TEST_CASE("easy attention is linear in its input") {
  Rng rng(5);
  for (auto v : {AttentionVariant::easy_dense, AttentionVariant::easy_sparse}) {
    Attention att({v, 6, 4, 2, 1}, rng);
    const Tensor x1 = random_tensor({12, 4}, rng, false);
    const Tensor x2 = random_tensor({12, 4}, rng, false);
    const double a = 1.7, b = -0.3;
    const Tensor lhs = att.forward(add(scale(x1, a), scale(x2, b)), 2);
    const Tensor rhs = add(scale(att.forward(x1, 2), a), scale(att.forward(x2, 2), b));
    CHECK(max_abs_diff(lhs.values(), rhs.values()) < 1e-10);
  }
}

TEST_CASE("easy attention graph has no softmax or query-key product") {
  Rng rng(6);
  for (auto v : {AttentionVariant::easy_dense, AttentionVariant::easy_sparse}) {
    Attention att({v, 5, 4, 2, 1}, rng);
    Tape tape;
    att.forward(random_tensor({10, 4}, rng, false), 2);
    for (const auto& op : tape.op_names()) {
      CHECK(op != "softmax_rows");
      CHECK(op.find("exp") == std::string::npos);
    }
    for (const auto& p : att.parameters()) {
      CHECK(p.name.find("w_q") == std::string::npos);
      CHECK(p.name.find("w_k") == std::string::npos);
      CHECK(p.name.find("w_c") == std::string::npos);
    }
    // one alpha-times-values product per head, no score product
    const auto names = tape.op_names();
    CHECK(std::count(names.begin(), names.end(), std::string("bmm")) == 2);
  }
}

TEST_CASE("sparse alpha materialization") {
  SUBCASE("main diagonal") {
    const Tensor band = Tensor({1, 3}, {1, 2, 3});
    CHECK(band_to_dense(band, 3, 0).values() == std::vector<double>{1, 0, 0, 0, 2, 0, 0, 0, 3});
  }
  SUBCASE("full band covers every position") {
    const std::size_t n = 5;
    CHECK(band_size(n, n - 1) == n * n);
    std::vector<double> ones(n * n, 1.0);
    const Tensor dense = band_to_dense(Tensor({1, n * n}, ones), n, n - 1);
    for (double v : dense.data()) CHECK(v == 1.0);
    CHECK(attention_param_count({AttentionVariant::easy_sparse, n, 4, 2, n - 1}) ==
          attention_param_count({AttentionVariant::easy_dense, n, 4, 2}));
  }
  SUBCASE("band structure") {
    const std::size_t n = 6, l = 1;
    Rng rng(7);
    const Tensor band = random_tensor({2, band_size(n, l)}, rng, false, 0.5, 1.0);
    const Tensor dense = band_to_dense(band, n, l);
    for (std::size_t hd = 0; hd < 2; ++hd)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double v = dense.at((hd * n + i) * n + j);
          const bool in_band = (i > j ? i - j : j - i) <= l;
          CHECK((in_band ? v != 0.0 : v == 0.0));
        }
  }
  SUBCASE("l at or above n is rejected") {
    Rng rng(8);
    CHECK_THROWS_AS(Attention({AttentionVariant::easy_sparse, 3, 3, 1, 3}, rng), DimensionError);
  }
  SUBCASE("off-band positions never reach a trainable scalar") {
    // Perturbing the loss weight on an off-band entry must leave every
    // stored-scalar derivative unchanged.
    const std::size_t n = 5, l = 1;
    Rng rng(9);
    Tensor band = random_tensor({1, band_size(n, l)}, rng);
    Tensor w = random_tensor({1, n, n}, rng, false);
    auto loss = [&] { return probe(band_to_dense(band, n, l), w); };
    CHECK(gradcheck({band}, loss) < 1e-5);
    const std::vector<double> before(band.grad().begin(), band.grad().end());
    w.mutable_data()[0 * n + 4] += 10.0;
    w.mutable_data()[3 * n + 0] -= 7.0;
    band.zero_grad();
    {
      Tape tape;
      tape.backward(loss());
    }
    CHECK(std::vector<double>(band.grad().begin(), band.grad().end()) == before);
    // and finite differences confirm that off-band entries carry no dependence
    const double base = loss().item();
    w.mutable_data()[2 * n + 4] += 1.0;
    CHECK(loss().item() == base);
  }
}

TEST_CASE("multi-head easy attention") {
  SUBCASE("h=1 equals single-head forward") {
    Rng r1(10), r2(10);
    Attention a({AttentionVariant::easy_dense, 4, 4, 1}, r1);
    Attention b({AttentionVariant::easy_dense, 4, 4, 1}, r2);
    Rng rx(11);
    const Tensor x = random_tensor({8, 4}, rx, false);
    CHECK(a.forward(x, 2).values() == b.forward(x, 2).values());
  }
  SUBCASE("transformer-scale count") {
    CHECK(attention_param_count({AttentionVariant::easy_dense, 64, 64, 4}) == 20480);
    CHECK(attention_param_count({AttentionVariant::easy_sparse, 64, 64, 4, 0}) == 4 * 64 + 4096);
  }
  SUBCASE("heads must divide d") {
    Rng rng(12);
    CHECK_THROWS_AS(Attention({AttentionVariant::easy_dense, 4, 6, 4}, rng), DimensionError);
  }
  SUBCASE("head permutation permutes output blocks") {
    const std::size_t n = 4, d = 6, h = 3, k = 2;
    Rng rng(13);
    Attention a({AttentionVariant::easy_dense, n, d, h}, rng);
    Attention b({AttentionVariant::easy_dense, n, d, h}, rng);
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t hd = 0; hd < h; ++hd) {
      for (std::size_t e = 0; e < n * n; ++e)
        b.alpha_dense.mutable_data()[hd * n * n + e] = a.alpha_dense.at(perm[hd] * n * n + e);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < k; ++c)
          b.w_value.mutable_data()[r * d + hd * k + c] = a.w_value.at(r, perm[hd] * k + c);
    }
    const Tensor x = random_tensor({n, d}, rng, false);
    const Tensor ya = a.forward(x, 1), yb = b.forward(x, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t hd = 0; hd < h; ++hd)
        for (std::size_t c = 0; c < k; ++c) CHECK(yb.at(i, hd * k + c) == ya.at(i, perm[hd] * k + c));
  }
  SUBCASE("no output projection") {
    Rng rng(14);
    Attention a({AttentionVariant::easy_dense, 4, 8, 4}, rng);
    CHECK(a.parameters().size() == 2);
  }
}

TEST_CASE("attention gradients") {
  Rng rng(15);
  for (auto v : {AttentionVariant::self, AttentionVariant::easy_dense, AttentionVariant::easy_sparse}) {
    CAPTURE(to_string(v));
    Attention att({v, 4, 4, 2, 1}, rng);
    Tensor x = random_tensor({8, 4}, rng);
    const Tensor w = random_tensor({8, 4}, rng, false);
    std::vector<Tensor> params{x};
    for (const auto& p : att.parameters()) params.push_back(p.value);
    CHECK(gradcheck(params, [&] { return probe(att.forward(x, 2), w); }) < 1e-5);
  }
}

TEST_CASE("flop estimates") {
  CHECK(flops_estimate({AttentionVariant::easy_dense, 3, 3, 1}) == 45);
  CHECK(flops_estimate({AttentionVariant::self, 3, 3, 1}) == 81);
  CHECK(flops_estimate({AttentionVariant::easy_dense, 1, 1, 1}) == 1);
  for (std::size_t n : {2u, 8u, 64u})
    for (std::size_t h : {1u, 2u, 4u}) {
      const std::size_t d = 4 * h;
      CHECK(flops_estimate({AttentionVariant::easy_dense, n, d, h}) <
            flops_estimate({AttentionVariant::self, n, d, h}));
      CHECK(flops_estimate({AttentionVariant::easy_sparse, n, d, h, 0}) <
            flops_estimate({AttentionVariant::easy_dense, n, d, h}));
    }
}

TEST_CASE("variant names") {
  CHECK(parse_attention_variant("easy") == AttentionVariant::easy_dense);
  CHECK(parse_attention_variant(to_string(AttentionVariant::easy_sparse)) == AttentionVariant::easy_sparse);
  CHECK_THROWS(parse_attention_variant("linear"));
}
