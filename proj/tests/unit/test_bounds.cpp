#include "generators.hpp"
#include "oracles.hpp"

#include "sparsestab/bounds.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace sparsestab;
using namespace sparsestab::bounds;

namespace {

BoundInputs fixed_inputs() {
  BoundInputs in;
  in.m = 1e4;
  in.d = 16;
  in.k = 32;
  in.s = 3;
  in.lambda = 0.1;
  in.r = 1;
  in.b = 1;
  in.L = 1;
  in.delta = 0.05;
  in.mu_s = 0.5;
  in.mu_2s = 0.3;
  in.margin_s = 0.05;
  return in;
}

oracle::BoundArgs to_args(const BoundInputs& in) {
  return {in.m, in.d, in.k, in.s, in.lambda, in.r, in.b, in.L, in.delta, in.mu_s, in.mu_2s, in.margin_s};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double term_sum(const BoundReport& r) {
  double s = 0.0;
  for (const auto& t : r.terms) s += t.value;
  return s;
}

BoundInputs random_inputs(Rng& rng) {
  BoundInputs in;
  in.d = static_cast<double>(gen::int_in(rng, 1, 64));
  in.k = static_cast<double>(gen::int_in(rng, 1, 64));
  in.s = static_cast<double>(gen::int_in(rng, 1, static_cast<Index>(in.k)));
  in.lambda = rng.uniform(0.01, 1.0);
  in.r = rng.uniform(0.1, 10.0);
  in.b = rng.uniform(0.1, 5.0);
  in.L = rng.uniform(0.1, 5.0);
  in.delta = rng.uniform(0.001, 0.5);
  in.mu_s = rng.uniform(0.01, 1.0);
  in.mu_2s = rng.uniform(0.01, 1.0) * in.mu_s;
  in.margin_s = rng.uniform(0.01, 1.0) * in.lambda;
  in.m = std::pow(10.0, rng.uniform(2.0, 9.0));
  return in;
}

}  // namespace

TEST_CASE("overcomplete bound on the fixed example matches the oracle") {
  const auto in = fixed_inputs();
  const auto r = eval_theorem3(in);
  CHECK(rel(r.total, oracle::overcomplete_bound(to_args(in))) <= 1e-10);
  CHECK(r.total == term_sum(r));
  CHECK(r.m_min == doctest::Approx(387.0 / (0.05 * 0.05 * 0.1)));
  // m = 1e4 is far below 387 / (0.0025 * 0.1) = 1.548e6.
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.reason.empty());
  CHECK(r.terms.size() == 4);
  CHECK_FALSE(r.alpha.has_value());
}

TEST_CASE("infinite-dimensional bound on the fixed example matches the oracle") {
  const auto in = fixed_inputs();
  const auto r = eval_theorem4(in);
  CHECK(rel(r.total, oracle::infinite_bound(to_args(in))) <= 1e-10);
  CHECK(r.total == term_sum(r));
  CHECK(r.m_min == doctest::Approx(43.0 / (0.05 * 0.05 * 0.1)));
  CHECK_FALSE(r.applicable);
  REQUIRE(r.alpha.has_value());
  CHECK(*r.alpha == doctest::Approx(std::pow(std::log2(4.0 / 0.5) * std::log2(4.0 / 0.3), 2)));
  CHECK(r.terms.size() == 5);
}

TEST_CASE("minimal configuration gives alpha = 16") {
  BoundInputs in = fixed_inputs();
  in.k = in.s = 1;
  in.mu_s = in.mu_2s = 1.0;
  const auto r = eval_theorem4(in);
  CHECK(*r.alpha == 16.0);
  for (const auto& t : r.terms) CHECK(std::isfinite(t.value));
  CHECK(std::isfinite(r.total));
}

TEST_CASE("both totals match the oracle on a random grid") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_inputs(rng);
    const auto r3 = eval_theorem3(in), r4 = eval_theorem4(in);
    CHECK(rel(r3.total, oracle::overcomplete_bound(to_args(in))) <= 1e-10);
    CHECK(rel(r4.total, oracle::infinite_bound(to_args(in))) <= 1e-10);
    CHECK(r3.total == term_sum(r3));
    CHECK(r4.total == term_sum(r4));
    CHECK(r3.applicable == (in.m > r3.m_min));
    CHECK(r4.applicable == (in.m >= r4.m_min));
  }
}

TEST_CASE("fixed form differs from the adaptive form only by the prior adjustment") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_inputs(rng);
    for (Regime regime : {Regime::Overcomplete, Regime::InfiniteDimensional}) {
      const auto a = evaluate(regime, in, Form::Adaptive);
      const auto f = evaluate(regime, in, Form::Fixed);
      CHECK(f.term("prior_adjustment") == 0.0);
      CHECK(a.term("prior_adjustment") >= 0.0);
      CHECK(a.total == doctest::Approx(f.total + a.term("prior_adjustment")).epsilon(1e-12));
      for (const auto& t : f.terms) {
        if (t.name != "prior_adjustment") CHECK(a.term(t.name) == t.value);
      }
    }
  }
}

TEST_CASE("infinite-dimensional report is bit-invariant to d") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_inputs(rng);
    const auto a = eval_theorem4(in);
    in.d = static_cast<double>(gen::int_in(rng, 1, 100000));
    const auto b = eval_theorem4(in);
    CHECK(a.total == b.total);
    REQUIRE(a.terms.size() == b.terms.size());
    for (std::size_t i = 0; i < a.terms.size(); ++i) CHECK(a.terms[i].value == b.terms[i].value);
    CHECK(a.m_min == b.m_min);
  }
}

TEST_CASE("totals strictly decrease in m above the threshold") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_inputs(rng);
    for (Regime regime : {Regime::Overcomplete, Regime::InfiniteDimensional}) {
      in.m = 1.0;
      const double m0 = evaluate(regime, in).m_min * 1.01;
      double prev = std::numeric_limits<double>::infinity();
      for (int e = 0; e < 40; ++e) {
        in.m = m0 * std::pow(10.0, e / 8.0);
        const auto r = evaluate(regime, in);
        CHECK(r.applicable);
        CHECK(r.total < prev);
        prev = r.total;
      }
    }
  }
}

TEST_CASE("bounds diverge as margin or incoherence vanish") {
  auto in = fixed_inputs();
  in.m = 1e9;
  double prev3 = 0.0, prev3mu = 0.0, prev4 = 0.0;
  for (int e = 1; e <= 12; ++e) {
    const double t = std::pow(10.0, -e);
    auto a = in;
    a.margin_s = t;
    auto b = in;
    b.mu_s = t;
    auto c = in;
    c.mu_2s = t;
    const double v3 = eval_theorem3(a).total, v3mu = eval_theorem3(b).total, v4 = eval_theorem4(c).total;
    CHECK(v3 > prev3);
    CHECK(v3mu > prev3mu);
    CHECK(v4 > prev4);
    prev3 = v3;
    prev3mu = v3mu;
    prev4 = v4;
  }
  // The stability term scales as 1/mu_s and the complexity term as 1/mu_2s.
  CHECK(prev3mu > 1e5);
  CHECK(prev4 > 1e5);
  auto bad = in;
  bad.margin_s = 0.0;
  CHECK_THROWS_AS(eval_theorem3(bad), UsageError);
  bad = in;
  bad.mu_s = 0.0;
  CHECK_THROWS_AS(eval_theorem3(bad), UsageError);
  bad = in;
  bad.mu_2s = 0.0;
  CHECK_THROWS_AS(eval_theorem4(bad), UsageError);
  bad = in;
  bad.delta = 1.5;
  CHECK_THROWS_AS(eval_theorem3(bad), UsageError);
}

TEST_CASE("evaluators are pure") {
  const auto in = fixed_inputs();
  CHECK(eval_theorem3(in).total == eval_theorem3(in).total);
  CHECK(eval_theorem4(in).total == eval_theorem4(in).total);
}

TEST_CASE("large radius triggers the warning without changing the value") {
  auto in = fixed_inputs();
  in.d = 1;
  in.k = 1;
  in.s = 1;
  in.m = 10.0;
  in.r = 1e3;
  const auto r = eval_theorem3(in);
  CHECK_FALSE(r.warnings.empty());
  CHECK(rel(r.total, oracle::overcomplete_bound(to_args(in))) <= 1e-10);
}

TEST_CASE("ghost-sample count") {
  CHECK(eval_eta(100, 2, 3, std::sqrt(3096.0), 1.0, 0.5) ==
        doctest::Approx(std::log(201.0) + std::log(2.0)).epsilon(1e-14));
  const double delta = 0.05;
  CHECK(eval_eta(100, 2, 3, 0.1, 0.1, delta) ==
        doctest::Approx(6.0 * std::log(3096.0 / 0.001) + std::log(201.0) + std::log(1.0 / delta)).epsilon(1e-14));
  CHECK_THROWS_AS(eval_eta(100, 2, 3, 0.0, 0.1, delta), UsageError);
  const double base = eval_eta(100, 2, 3, 0.1, 0.1, delta);
  CHECK(eval_eta(101, 2, 3, 0.1, 0.1, delta) > base);
  CHECK(eval_eta(100, 3, 3, 0.1, 0.1, delta) > base);
  CHECK(eval_eta(100, 2, 4, 0.1, 0.1, delta) > base);
  CHECK(eval_eta(100, 2, 3, 0.1, 0.1, delta / 2) > base);
}

TEST_CASE("covering numbers in log form") {
  const auto unit = eval_covering_numbers(5, 7, 2.0, 8.0);
  CHECK(unit.log_proper_dictionary == 0.0);
  CHECK(unit.log_hypothesis == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(eval_covering_numbers(2, 3, 2.0, 0.5).log_proper_dictionary ==
        doctest::Approx(6.0 * std::log(16.0)).epsilon(1e-14));
  CHECK_THROWS_AS(eval_covering_numbers(2, 3, 2.0, 0.0), UsageError);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double d = static_cast<double>(gen::int_in(rng, 1, 500)), k = static_cast<double>(gen::int_in(rng, 1, 500));
    const double r = rng.uniform(0.01, 100.0), eps = std::pow(10.0, rng.uniform(-8.0, 1.0));
    const auto c = eval_covering_numbers(d, k, r, eps);
    // (8 (r/2)^{1/(d+1)} / eps)^{(d+1)k} expanded as a sum of logs.
    const double expect = k * ((d + 1.0) * std::log(8.0 / eps) + std::log(r / 2.0));
    CHECK(rel(c.log_hypothesis, expect) <= 1e-10);
    CHECK(std::isfinite(c.log_proper_dictionary));
  }
}

TEST_CASE("Monte Carlo Gaussian average stays below its bound") {
  Rng rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const Index s = gen::int_in(rng, 1, 2);
    const Index k = 2 * s + gen::int_in(rng, 0, 2);
    const Index d = k + gen::int_in(rng, 0, 3);
    const auto sd = gen::unit_dictionary(k, k, rng);
    Matrix pts(d, 25);
    for (Index i = 0; i < 25; ++i) pts.col(i) = 0.6 * gen::ball_point(d, rng);
    const double r = 1.0;
    const Vector w = r * random_on_sphere(k, rng);
    const auto g = monte_carlo_gaussian_average(sd, w, Sample(pts), s, 0.45, r, 8, 200, rng);
    CHECK(g.admissible_isometries > 0);
    CHECK(g.bound == doctest::Approx(4.0 * r * static_cast<double>(k) * std::sqrt(2.0 * static_cast<double>(s)) /
                                      (g.mu_2s * std::sqrt(25.0))));
    CHECK(g.estimate <= g.bound + 3.0 * g.standard_error);
  }
  const auto sd = gen::unit_dictionary(4, 4, rng);
  Matrix pts(5, 10);
  for (Index i = 0; i < 10; ++i) pts.col(i) = 0.6 * gen::ball_point(5, rng);
  const auto zero = monte_carlo_gaussian_average(sd, Vector::Zero(4), Sample(pts), 1, 0.45, 1.0, 4, 50, rng);
  CHECK(zero.estimate == 0.0);
  CHECK(zero.bound > 0.0);
  const auto single = monte_carlo_gaussian_average(sd, random_on_sphere(4, rng), Sample(pts), 1, 0.45, 1.0, 1, 400, rng);
  CHECK(single.estimate <= single.bound + 3.0 * single.standard_error);

  Matrix dup = sd.matrix();
  dup.col(1) = dup.col(0);
  CHECK_THROWS_AS(monte_carlo_gaussian_average(Dictionary(dup), Vector::Zero(4), Sample(pts), 1, 0.45, 1.0, 4, 50, rng),
                  UsageError);
  CHECK_THROWS_AS(monte_carlo_gaussian_average(sd, Vector::Zero(4), Sample(pts), 3, 0.45, 1.0, 4, 50, rng), UsageError);
}
