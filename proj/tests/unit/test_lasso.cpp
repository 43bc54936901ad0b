#include "generators.hpp"
#include "oracles.hpp"

#include "sparsestab/lasso.hpp"

#include <doctest.h>

#include <cmath>

using namespace sparsestab;
using lasso::encode;

TEST_CASE("identity dictionary soft-thresholds") {
  Vector x(2);
  x << 0.8, 0.3;
  const auto sol = encode(Dictionary::identity(2), x, 0.5);
  CHECK(sol.converged);
  CHECK(sol.z()(0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(sol.z()(1) == 0.0);
  CHECK(sol.code.support == std::vector<Index>{0});
  CHECK(sol.objective == doctest::Approx(0.32).epsilon(1e-14));
  CHECK(lasso::objective_value(Matrix::Identity(2, 2), x, sol.z(), 0.5) ==
        doctest::Approx(0.32).epsilon(1e-14));
  CHECK(lasso::check_osborne_identity(sol, 0.5) <= 1e-12);
}

TEST_CASE("zero input gives the zero code") {
  Rng rng(1);
  const auto dict = gen::unit_dictionary(6, 9, rng);
  const auto sol = encode(dict, Vector::Zero(6), 0.2);
  CHECK(sol.converged);
  CHECK(sol.z().isZero(0.0));
  CHECK(sol.objective == 0.0);
  CHECK(sol.code.nnz() == 0);
  CHECK(lasso::check_osborne_identity(sol, 0.2) == 0.0);
  CHECK(lasso::objective_value(dict.matrix(), Vector::Constant(6, 0.1), Vector::Zero(9), 0.2) ==
        doctest::Approx(0.5 * 6 * 0.01));
}

TEST_CASE("bad arguments are usage errors") {
  const auto dict = Dictionary::identity(3);
  CHECK_THROWS_AS(encode(dict, Vector::Zero(3), 0.0), UsageError);
  CHECK_THROWS_AS(encode(dict, Vector::Zero(3), -1.0), UsageError);
  CHECK_THROWS_AS(encode(dict, Vector::Zero(4), 0.1), UsageError);
  CHECK_THROWS_AS(lasso::objective_value(dict.matrix(), Vector::Zero(3), Vector::Zero(2), 0.1),
                  UsageError);
}

TEST_CASE("orthonormal dictionaries give exact soft thresholding") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = gen::int_in(rng, 1, 10);
    const Index d = k + gen::int_in(rng, 0, 6);
    const Dictionary dict(random_isometry(d, k, rng));
    const Vector x = gen::ball_point(d, rng);
    const double lambda = rng.uniform(0.01, 0.5);
    const auto sol = encode(dict, x, lambda);
    const Vector c = dict.matrix().transpose() * x;
    for (Index j = 0; j < k; ++j) {
      const double expect = std::copysign(std::max(std::abs(c(j)) - lambda, 0.0), c(j));
      CHECK(std::abs(sol.z()(j) - expect) <= 1e-10);
    }
  }
}

TEST_CASE("solver matches the support-enumeration oracle") {
  Rng rng(3);
  int compared = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto dict = gen::ball_dictionary(5, 8, rng);
    const Vector x = gen::sparse_point(dict, gen::int_in(rng, 1, 2), 0.05, rng);
    const double lambda = rng.uniform(0.05, 0.5);
    const auto ref = oracle::brute_force_lasso(dict.matrix(), x, lambda, 3);
    if (!ref) continue;
    ++compared;
    const auto sol = encode(dict, x, lambda);
    CHECK(sol.converged);
    CHECK((sol.z() - ref->z).norm() <= 1e-6);
    CHECK(sol.objective <= ref->objective + 1e-12);
  }
  CHECK(compared >= 200);
}

TEST_CASE("returned solutions satisfy optimality invariants") {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const Index d = gen::int_in(rng, 2, 16), k = gen::int_in(rng, 1, 20);
    const auto dict = gen::ball_dictionary(d, k, rng);
    const Vector x = gen::ball_point(d, rng);
    const double lambda = std::pow(10.0, rng.uniform(-2.5, 0.0));
    const auto sol = encode(dict, x, lambda);
    REQUIRE(sol.converged);
    CHECK(sol.duality_gap <= 1e-10);
    CHECK(lasso::kkt_residual(sol, lambda) <= 1e-8);
    CHECK(lasso::check_osborne_identity(sol, lambda) <= 1e-8);
    CHECK(sol.z().lpNorm<1>() <= x.squaredNorm() / (2.0 * lambda) + 1e-12);
    // Cached quantities agree with a fresh evaluation.
    const Vector r = x - dict.matrix() * sol.z();
    CHECK((sol.residual - r).norm() <= 1e-12 * std::max(1.0, r.norm()));
    CHECK((sol.correlations - dict.matrix().transpose() * r).norm() <= 1e-12);
    const double obj = lasso::objective_value(dict.matrix(), x, sol.z(), lambda);
    CHECK(std::abs(sol.objective - obj) <= 1e-12 * std::max(1.0, obj));
    CHECK(lasso::duality_gap(dict.matrix(), x, sol.z(), lambda) <= 1e-10);
    for (Index j = 0; j < k; ++j) {
      const bool active = std::abs(sol.z()(j)) > kDefaultZeroThreshold;
      CHECK(active == std::binary_search(sol.code.support.begin(), sol.code.support.end(), j));
    }
  }
}

TEST_CASE("solver output beats random nearby codes") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto dict = gen::ball_dictionary(8, 12, rng);
    const Vector x = gen::ball_point(8, rng);
    const double lambda = rng.uniform(0.02, 0.3);
    const auto sol = encode(dict, x, lambda);
    for (int probe = 0; probe < 100; ++probe) {
      const Vector z = sol.z() + rng.uniform(1e-6, 1e-1) * rng.normal_vector(12);
      CHECK(sol.objective <= lasso::objective_value(dict.matrix(), x, z, lambda) + 1e-14);
    }
  }
}

TEST_CASE("tighter tolerance never raises the objective and output is deterministic") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dict = gen::unit_dictionary(10, 15, rng);
    const Vector x = gen::ball_point(10, rng);
    const double lambda = rng.uniform(0.01, 0.2);
    lasso::LassoOptions loose, tight;
    loose.gap_tol = 1e-4;
    loose.polish = false;
    tight.gap_tol = 1e-12;
    tight.polish = false;
    const auto a = encode(dict, x, lambda, loose);
    const auto b = encode(dict, x, lambda, tight);
    CHECK(b.objective <= a.objective + 1e-15);
    const auto c = encode(dict, x, lambda);
    const auto d = encode(dict, x, lambda);
    CHECK(c.z() == d.z());
    CHECK(c.iterations == d.iterations);
  }
}

TEST_CASE("iteration cap reports non-convergence instead of throwing") {
  Rng rng(7);
  const auto dict = gen::unit_dictionary(20, 40, rng);
  const Vector x = gen::ball_point(20, rng);
  lasso::LassoOptions opts;
  opts.max_iters = 1;
  opts.gap_tol = 1e-15;
  opts.polish = false;
  const auto sol = encode(dict, x, 0.001, opts);
  CHECK_FALSE(sol.converged);
  CHECK(sol.duality_gap > opts.gap_tol);
  CHECK(sol.iterations == 1);
}

TEST_CASE("encode_sample matches pointwise encoding") {
  Rng rng(8);
  const auto dict = gen::unit_dictionary(6, 10, rng);
  Matrix pts(6, 25);
  for (Index i = 0; i < 25; ++i) pts.col(i) = gen::ball_point(6, rng);
  const Sample sample(pts);
  const auto all = lasso::encode_sample(dict, sample, 0.1);
  REQUIRE(all.size() == 25);
  for (Index i = 0; i < 25; ++i) {
    CHECK(all[static_cast<std::size_t>(i)].z() == encode(dict, sample.x(i), 0.1).z());
  }
}
