#include "generators.hpp"

#include "sparsestab/core.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

using namespace sparsestab;

TEST_CASE("validate_dictionary reports per-column violations") {
  CHECK(validate_dictionary(Matrix(Matrix::Identity(2, 2))).empty());

  Matrix big = Matrix::Identity(2, 2);
  big(0, 1) = 2.0;
  big(1, 1) = 0.0;
  const auto v = validate_dictionary(big);
  REQUIRE(v.size() == 1);
  CHECK(v[0].column == 1);

  Matrix nan = Matrix::Identity(2, 3) * 0.5;
  nan(1, 2) = std::numeric_limits<double>::quiet_NaN();
  const auto w = validate_dictionary(nan);
  REQUIRE(w.size() == 1);
  CHECK(w[0].column == 2);

  Matrix edge = Matrix::Identity(3, 3);
  edge(0, 0) = 1.0 + 0.5e-12;
  CHECK(validate_dictionary(edge).empty());
  edge(0, 0) = 1.0 + 1e-9;
  CHECK(validate_dictionary(edge).size() == 1);
}

TEST_CASE("Dictionary construction enforces the unit-ball invariant") {
  CHECK_THROWS_AS(Dictionary(Matrix::Constant(2, 2, 1.0)), UsageError);
  CHECK_NOTHROW(Dictionary::identity(4));
  CHECK(Dictionary::identity(3).atoms() == 3);
}

TEST_CASE("project_columns_to_ball examples") {
  Matrix a(2, 2);
  a << 3.0, 0.1, 4.0, 0.0;
  const Dictionary p = project_columns_to_ball(a);
  CHECK(p.matrix()(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.matrix()(1, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.matrix()(0, 1) == 0.1);
  CHECK(p.matrix()(1, 1) == 0.0);

  Matrix bad = a;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(project_columns_to_ball(bad), UsageError);
}

TEST_CASE("project_columns_to_ball is idempotent and non-expansive") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = gen::int_in(rng, 1, 12), k = gen::int_in(rng, 1, 12);
    const Matrix a = rng.uniform(0.1, 3.0) * rng.normal_matrix(d, k);
    const Matrix b = rng.uniform(0.1, 3.0) * rng.normal_matrix(d, k);
    const Dictionary pa = project_columns_to_ball(a);
    const Dictionary pb = project_columns_to_ball(b);
    CHECK(project_columns_to_ball(pa.matrix()) == pa);
    CHECK(validate_dictionary(pa).empty());
    for (Index j = 0; j < k; ++j) {
      CHECK((pa.atom(j) - pb.atom(j)).norm() <= (a.col(j) - b.col(j)).norm() + 1e-12);
    }
  }
}

TEST_CASE("Sample enforces the ball and label invariants") {
  Matrix pts(2, 2);
  pts << 0.6, 0.0, 0.8, 0.5;
  CHECK_NOTHROW(Sample(pts, {1.0, -1.0}));
  CHECK_THROWS_AS(Sample(pts, {1.0}), DataError);
  pts(0, 1) = 2.0;
  CHECK_THROWS_AS(Sample{pts}, DataError);
  CHECK_THROWS_AS(Sample{Matrix(2, 0)}, DataError);

  Matrix ok = Matrix::Zero(3, 4);
  ok(0, 2) = 0.5;
  const Sample s(ok, {1, 2, 3, 4});
  const Sample sub = s.subset({2, 0});
  CHECK(sub.size() == 2);
  CHECK(sub.y(0) == 3.0);
  CHECK(sub.x(0)(0) == 0.5);
}

TEST_CASE("Hypothesis enforces the weight radius") {
  CHECK_NOTHROW(Hypothesis(Dictionary::identity(2), Vector::Constant(2, 0.5), 1.0));
  CHECK_THROWS_AS(Hypothesis(Dictionary::identity(2), Vector::Constant(2, 1.0), 1.0), UsageError);
}

TEST_CASE("SparseCode support uses the zero threshold") {
  Vector z(4);
  z << 0.5, 1e-11, -2e-10, 0.0;
  const auto c = SparseCode::from_vector(z);
  CHECK(c.support == std::vector<Index>{0, 2});
  CHECK(c.nnz() == 2);
}

TEST_CASE("Rng streams are reproducible and derived streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  // The first output of mt19937_64 seeded with 42 is fixed by the standard engine definition.
  std::mt19937_64 ref(42);
  CHECK(c.next_u64() == ref());

  const Rng root(5);
  Rng d0 = root.derive(0), d1 = root.derive(1), d0b = root.derive(0);
  const auto x0 = d0.next_u64();
  CHECK(x0 == d0b.next_u64());
  CHECK(x0 != d1.next_u64());

  Rng u(3);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = u.uniform();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v / 20000.0;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));

  Rng g(4);
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = g.normal();
    m1 += v / 20000.0;
    m2 += v * v / 20000.0;
  }
  CHECK(std::abs(m1) < 0.03);
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("power iteration agrees with the SVD spectral norm") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = gen::int_in(rng, 1, 20), c = gen::int_in(rng, 1, 20);
    const Matrix a = rng.normal_matrix(r, c);
    const auto pw = operator_norm_power(a, rng, 1e-12, 5000);
    CHECK(pw.norm == doctest::Approx(spectral_norm(a)).epsilon(1e-5));
    CHECK(pw.norm <= spectral_norm(a) * (1.0 + 1e-12));
  }
  CHECK(operator_norm_power(Matrix::Zero(3, 3), rng).norm == 0.0);
}

TEST_CASE("random_isometry has orthonormal columns") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Index k = gen::int_in(rng, 1, 10);
    const Index d = k + gen::int_in(rng, 0, 10);
    const Matrix u = random_isometry(d, k, rng);
    CHECK((u.transpose() * u - Matrix::Identity(k, k)).norm() < 1e-12);
  }
  CHECK_THROWS_AS(random_isometry(2, 3, rng), UsageError);
}

TEST_CASE("combination helpers enumerate every subset once in order") {
  CHECK(n_choose_k(5, 2) == 10);
  CHECK(n_choose_k(16, 8) == 12870);
  CHECK(n_choose_k(3, 5) == 0);
  CHECK(n_choose_k(200, 100) == std::numeric_limits<std::uint64_t>::max());
  for (Index n = 1; n <= 8; ++n) {
    for (Index s = 1; s <= n; ++s) {
      std::vector<Index> combo = unrank_combination(n, s, 0);
      std::set<std::vector<Index>> seen;
      std::uint64_t rank = 0;
      do {
        CHECK(combo == unrank_combination(n, s, rank));
        seen.insert(combo);
        ++rank;
      } while (next_combination(combo, n));
      CHECK(rank == n_choose_k(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(s)));
      CHECK(seen.size() == rank);
    }
  }
}

TEST_CASE("sample_fingerprint is a content hash") {
  Rng rng(1);
  Matrix p = rng.normal_matrix(3, 5);
  for (Index i = 0; i < 5; ++i) p.col(i).normalize();
  const Sample a(p), b(p);
  CHECK(sample_fingerprint(a) == sample_fingerprint(b));
  CHECK(sample_fingerprint(a).size() == 64);
  Matrix q = p;
  q(0, 0) = std::nextafter(q(0, 0), 0.0);
  CHECK(sample_fingerprint(Sample(q)) != sample_fingerprint(a));
  CHECK(sample_fingerprint(Sample(p, {1, 1, 1, 1, 1})) != sample_fingerprint(a));
}

TEST_CASE("worker_threads honors the cap") {
  CHECK(worker_threads() >= 1);
}
