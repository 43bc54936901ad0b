#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsestab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Slack absorbed by unit-ball membership checks (projection round-off).
inline constexpr double kBallTolerance = 1e-12;

/// Coefficients with magnitude at or below this are treated as zero when
/// extracting a support.
inline constexpr double kDefaultZeroThreshold = 1e-10;

// Error taxonomy. The CLI maps each family onto a distinct exit code.

/// Caller passed inconsistent or out-of-domain arguments.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data could not be read or violates a data invariant.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative routine stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Violation {
  Index column = -1;  // -1 for matrix-level problems
  std::string message;
};

/// Violations of the dictionary invariants: finite entries and every column
/// inside the closed unit ball (up to kBallTolerance). Empty means valid.
std::vector<Violation> validate_dictionary(const Matrix& entries);

/// A d x k matrix whose columns (atoms) lie in the unit l2 ball. Storage is
/// Eigen's column-major layout, so each atom is contiguous.
class Dictionary {
 public:
  Dictionary() = default;

  /// Throws UsageError listing the first violation if `entries` is invalid.
  explicit Dictionary(Matrix entries);

  static Dictionary identity(Index k);

  const Matrix& matrix() const { return entries_; }
  Index dim() const { return entries_.rows(); }
  Index atoms() const { return entries_.cols(); }
  auto atom(Index j) const { return entries_.col(j); }

  bool operator==(const Dictionary& other) const {
    return entries_.rows() == other.entries_.rows() &&
           entries_.cols() == other.entries_.cols() && entries_ == other.entries_;
  }

 private:
  Matrix entries_;
};

std::vector<Violation> validate_dictionary(const Dictionary& dict);

/// Scales every column by min(1, 1/||column||); columns already inside the
/// tolerance band are left bit-identical, which makes the map exactly
/// idempotent. Throws UsageError on non-finite input.
Dictionary project_columns_to_ball(const Matrix& entries);

/// Sparse code: the coefficient vector and the sorted indices whose
/// magnitude exceeds the zero threshold used when it was built.
struct SparseCode {
  Vector z;
  std::vector<Index> support;

  static SparseCode from_vector(Vector z, double zero_threshold = kDefaultZeroThreshold);
  Index nnz() const { return static_cast<Index>(support.size()); }
};

/// A sample of m points in the unit ball of R^d, stored one point per
/// column. Labels are optional; when present there is one per point.
class Sample {
 public:
  Sample() = default;
  explicit Sample(Matrix points, std::vector<double> labels = {});

  Index size() const { return points_.cols(); }
  Index dim() const { return points_.rows(); }
  bool has_labels() const { return !labels_.empty(); }

  auto x(Index i) const { return points_.col(i); }
  double y(Index i) const { return labels_.at(static_cast<std::size_t>(i)); }

  const Matrix& points() const { return points_; }
  const std::vector<double>& labels() const { return labels_; }

  /// Points at the given indices, in the given order.
  Sample subset(const std::vector<Index>& indices) const;

 private:
  Matrix points_;
  std::vector<double> labels_;
};

/// Predictive hypothesis f(x) = <w, phi_D(x)> with ||w|| <= r.
struct Hypothesis {
  Dictionary dictionary;
  Vector w;
  double r = 1.0;

  Hypothesis() = default;
  Hypothesis(Dictionary dict, Vector weights, double radius);
};

/// Deterministic generator. The 64-bit stream is std::mt19937_64, whose
/// output sequence is fixed by the standard; uniform and normal draws are
/// derived from it without implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  /// Independent child generator for stream `stream`; does not advance this
  /// generator, so children for parallel trials can be created in any order.
  Rng derive(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Small dense linear-algebra helpers shared across modules.

/// Largest singular value via a full SVD.
double spectral_norm(const Matrix& a);

struct PowerIterationResult {
  double norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Operator 2-norm by power iteration on A^T A, stopping when successive
/// estimates agree to `rel_tol`.
PowerIterationResult operator_norm_power(const Matrix& a, Rng& rng, double rel_tol = 1e-10,
                                         int max_iters = 500);

/// d x k matrix with orthonormal columns, Haar distributed. Requires d >= k.
Matrix random_isometry(Index d, Index k, Rng& rng);

/// Uniformly random point of the unit sphere in R^d scaled by `radius`.
Vector random_on_sphere(Index d, Rng& rng, double radius = 1.0);

/// Binomial coefficient saturated at UINT64_MAX.
std::uint64_t n_choose_k(std::uint64_t n, std::uint64_t k);

/// The `rank`-th s-subset of {0..n-1} in lexicographic order.
std::vector<Index> unrank_combination(Index n, Index s, std::uint64_t rank);

/// Advances `combo` to the next s-subset in lexicographic order; returns
/// false after the last one.
bool next_combination(std::vector<Index>& combo, Index n);

/// Columns of `a` selected by `cols`, in order.
Matrix select_columns(const Matrix& a, const std::vector<Index>& cols);

/// Hex SHA-256 of the raw float64 payload (and labels) of a sample.
std::string sample_fingerprint(const Sample& sample);

/// Worker count honoring the SPARSE_STAB_THREADS cap (>= 1).
int worker_threads();

}  // namespace sparsestab
