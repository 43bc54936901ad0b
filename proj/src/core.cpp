#include "sparsestab/core.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sparsestab {

std::vector<Violation> validate_dictionary(const Matrix& entries) {
  std::vector<Violation> out;
  if (entries.rows() < 1 || entries.cols() < 1) {
    out.push_back({-1, "dictionary must have d >= 1 and k >= 1"});
    return out;
  }
  for (Index j = 0; j < entries.cols(); ++j) {
    const auto col = entries.col(j);
    if (!col.allFinite()) {
      out.push_back({j, "column " + std::to_string(j) + " has a non-finite entry"});
      continue;
    }
    const double norm = col.norm();
    if (norm > 1.0 + kBallTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "column " << j << " has norm " << norm << " > 1";
      out.push_back({j, msg.str()});
    }
  }
  return out;
}

std::vector<Violation> validate_dictionary(const Dictionary& dict) {
  return validate_dictionary(dict.matrix());
}

Dictionary::Dictionary(Matrix entries) : entries_(std::move(entries)) {
  const auto violations = validate_dictionary(entries_);
  if (!violations.empty()) {
    throw UsageError("invalid dictionary: " + violations.front().message);
  }
}

Dictionary Dictionary::identity(Index k) { return Dictionary(Matrix::Identity(k, k)); }

Dictionary project_columns_to_ball(const Matrix& entries) {
  if (!entries.allFinite()) {
    throw UsageError("project_columns_to_ball: non-finite entry");
  }
  Matrix out = entries;
  for (Index j = 0; j < out.cols(); ++j) {
    const double norm = out.col(j).norm();
    if (norm > 1.0 + kBallTolerance) out.col(j) /= norm;
  }
  return Dictionary(std::move(out));
}

SparseCode SparseCode::from_vector(Vector z, double zero_threshold) {
  SparseCode code;
  for (Index j = 0; j < z.size(); ++j) {
    if (std::abs(z(j)) > zero_threshold) {
      code.support.push_back(j);
    } else {
      z(j) = 0.0;
    }
  }
  code.z = std::move(z);
  return code;
}

Sample::Sample(Matrix points, std::vector<double> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  if (points_.cols() < 1 || points_.rows() < 1) {
    throw DataError("sample must contain at least one point of dimension >= 1");
  }
  if (!labels_.empty() && static_cast<Index>(labels_.size()) != points_.cols()) {
    throw DataError("sample has " + std::to_string(points_.cols()) + " points but " +
                    std::to_string(labels_.size()) + " labels");
  }
  for (Index i = 0; i < points_.cols(); ++i) {
    if (!points_.col(i).allFinite()) {
      throw DataError("sample point " + std::to_string(i) + " has a non-finite entry");
    }
    if (points_.col(i).norm() > 1.0 + kBallTolerance) {
      throw DataError("sample point " + std::to_string(i) + " lies outside the unit ball");
    }
  }
}

Sample Sample::subset(const std::vector<Index>& indices) const {
  Matrix pts(dim(), static_cast<Index>(indices.size()));
  std::vector<double> ys;
  for (std::size_t c = 0; c < indices.size(); ++c) {
    pts.col(static_cast<Index>(c)) = points_.col(indices[c]);
    if (has_labels()) ys.push_back(labels_.at(static_cast<std::size_t>(indices[c])));
  }
  return Sample(std::move(pts), std::move(ys));
}

Hypothesis::Hypothesis(Dictionary dict, Vector weights, double radius)
    : dictionary(std::move(dict)), w(std::move(weights)), r(radius) {
  if (!(r > 0.0)) throw UsageError("hypothesis radius r must be positive");
  if (w.size() != dictionary.atoms()) {
    throw UsageError("weight vector length does not match atom count");
  }
  if (w.norm() > r + kBallTolerance) {
    throw UsageError("weight vector lies outside the radius-r ball");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw UsageError("uniform_index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  // Marsaglia polar method.
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  return u * f;
}

Vector Rng::normal_vector(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

Rng Rng::derive(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

PowerIterationResult operator_norm_power(const Matrix& a, Rng& rng, double rel_tol,
                                         int max_iters) {
  PowerIterationResult res;
  if (a.size() == 0 || a.isZero(0.0)) {
    res.converged = true;
    return res;
  }
  Vector v = rng.normal_vector(a.cols());
  v.normalize();
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    Vector av = a * v;
    Vector w = a.transpose() * av;
    const double wn = w.norm();
    res.iterations = it;
    if (wn == 0.0) {
      res.norm = av.norm();
      res.converged = true;
      return res;
    }
    v = w / wn;
    const double estimate = std::sqrt(wn);
    if (it > 1 && std::abs(estimate - prev) <= rel_tol * estimate) {
      res.norm = (a * v).norm();
      res.converged = true;
      return res;
    }
    prev = estimate;
  }
  res.norm = (a * v).norm();
  return res;
}

Matrix random_isometry(Index d, Index k, Rng& rng) {
  if (d < k) throw UsageError("random_isometry requires d >= k");
  const Matrix g = rng.normal_matrix(d, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  // Fixing the signs of R's diagonal makes Q Haar distributed.
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Vector random_on_sphere(Index d, Rng& rng, double radius) {
  Vector v = rng.normal_vector(d);
  while (v.norm() == 0.0) v = rng.normal_vector(d);
  return v.normalized() * radius;
}

std::uint64_t n_choose_k(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i is always integral at this point.
    const std::uint64_t num = n - k + i;
    const std::uint64_t g = std::gcd(result, i);
    const std::uint64_t reduced_i = i / g;
    const std::uint64_t reduced_r = result / g;
    const std::uint64_t reduced_num = num / reduced_i;
    if (reduced_num != 0 &&
        reduced_r > std::numeric_limits<std::uint64_t>::max() / reduced_num) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result = reduced_r * reduced_num;
  }
  return result;
}

std::vector<Index> unrank_combination(Index n, Index s, std::uint64_t rank) {
  std::vector<Index> combo;
  combo.reserve(static_cast<std::size_t>(s));
  Index next = 0;
  for (Index slot = 0; slot < s; ++slot) {
    for (Index c = next; c < n; ++c) {
      const std::uint64_t count = n_choose_k(static_cast<std::uint64_t>(n - c - 1),
                                             static_cast<std::uint64_t>(s - slot - 1));
      if (rank < count) {
        combo.push_back(c);
        next = c + 1;
        break;
      }
      rank -= count;
    }
  }
  return combo;
}

bool next_combination(std::vector<Index>& combo, Index n) {
  const Index s = static_cast<Index>(combo.size());
  Index i = s - 1;
  while (i >= 0 && combo[static_cast<std::size_t>(i)] == n - s + i) --i;
  if (i < 0) return false;
  ++combo[static_cast<std::size_t>(i)];
  for (Index j = i + 1; j < s; ++j) {
    combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
  }
  return true;
}

Matrix select_columns(const Matrix& a, const std::vector<Index>& cols) {
  Matrix out(a.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = a.col(cols[c]);
  return out;
}

std::string sample_fingerprint(const Sample& sample) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  const std::int64_t dims[2] = {static_cast<std::int64_t>(sample.dim()),
                                static_cast<std::int64_t>(sample.size())};
  EVP_DigestUpdate(ctx, dims, sizeof(dims));
  EVP_DigestUpdate(ctx, sample.points().data(),
                   static_cast<std::size_t>(sample.points().size()) * sizeof(double));
  if (sample.has_labels()) {
    EVP_DigestUpdate(ctx, sample.labels().data(), sample.labels().size() * sizeof(double));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

int worker_threads() {
  int available = 1;
#ifdef _OPENMP
  available = omp_get_max_threads();
#endif
  if (const char* cap = std::getenv("SPARSE_STAB_THREADS")) {
    const int requested = std::atoi(cap);
    if (requested >= 1) available = std::min(available, requested);
  }
  return std::max(1, available);
}

}  // namespace sparsestab
