#include "sparsestab/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sparsestab::lasso {
namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

void check_inputs(const Matrix& dict, const Vector& x, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw UsageError("lasso: lambda must be positive and finite");
  }
  if (x.size() != dict.rows()) {
    throw UsageError("lasso: point has dimension " + std::to_string(x.size()) +
                     " but dictionary has d = " + std::to_string(dict.rows()));
  }
  if (!x.allFinite()) throw UsageError("lasso: point has a non-finite entry");
}

// Solves the equality-constrained KKT system on the current support. Returns
// false if the support Gram matrix is singular or the signs flip.
bool polish_on_support(const Matrix& dict, const Vector& x, double lambda,
                       double zero_threshold, Vector& z) {
  std::vector<Index> support;
  for (Index j = 0; j < z.size(); ++j) {
    if (std::abs(z(j)) > zero_threshold) support.push_back(j);
  }
  Vector refined = Vector::Zero(z.size());
  if (!support.empty()) {
    const Matrix sub = select_columns(dict, support);
    Vector rhs = sub.transpose() * x;
    for (std::size_t a = 0; a < support.size(); ++a) {
      rhs(static_cast<Index>(a)) -= lambda * (z(support[a]) > 0.0 ? 1.0 : -1.0);
    }
    const Matrix gram = sub.transpose() * sub;
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const auto diag = ldlt.vectorD();
    if (diag.minCoeff() <= 1e-14 * std::max(1.0, diag.maxCoeff())) return false;
    const Vector sol = ldlt.solve(rhs);
    if (!sol.allFinite()) return false;
    for (std::size_t a = 0; a < support.size(); ++a) {
      const double v = sol(static_cast<Index>(a));
      if (v * z(support[a]) <= 0.0 || std::abs(v) <= zero_threshold) return false;
      refined(support[a]) = v;
    }
  }
  z = std::move(refined);
  return true;
}

// Feature-sign search: a primal active-set method that solves the LASSO
// exactly in finitely many steps. Used to finish instances where coordinate
// descent stalls on highly coherent atoms. Every step is a line search on
// the full objective, so the objective never increases.
Vector feature_sign_search(const Matrix& dict, const Vector& x, double lambda, Vector z,
                           double zero_threshold, int max_steps) {
  const Index k = dict.cols();
  auto objective = [&](const Vector& v) {
    return 0.5 * (x - dict * v).squaredNorm() + lambda * v.lpNorm<1>();
  };
  for (Index j = 0; j < k; ++j) {
    if (std::abs(z(j)) <= zero_threshold) z(j) = 0.0;
  }
  Vector theta = z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  for (int step = 0; step < max_steps; ++step) {
    const Vector c = dict.transpose() * (x - dict * z);
    // Active coefficients must satisfy c_j = lambda theta_j; otherwise take
    // a sign-restricted step. If they do, activate the worst inactive atom.
    double active_violation = 0.0;
    for (Index j = 0; j < k; ++j) {
      if (theta(j) != 0.0) active_violation = std::max(active_violation, std::abs(c(j) - lambda * theta(j)));
    }
    if (active_violation <= 1e-13) {
      Index worst = -1;
      double worst_c = lambda;
      for (Index j = 0; j < k; ++j) {
        if (theta(j) == 0.0 && std::abs(c(j)) > worst_c) {
          worst_c = std::abs(c(j));
          worst = j;
        }
      }
      if (worst < 0) return z;
      theta(worst) = c(worst) > 0.0 ? 1.0 : -1.0;
    }
    std::vector<Index> active;
    for (Index j = 0; j < k; ++j) {
      if (theta(j) != 0.0) active.push_back(j);
    }
    const Matrix sub = select_columns(dict, active);
    const Matrix gram = sub.transpose() * sub;
    Vector b = sub.transpose() * x;
    Vector za(static_cast<Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) {
      b(static_cast<Index>(a)) -= lambda * theta(active[a]);
      za(static_cast<Index>(a)) = z(active[a]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
    Vector target = cod.solve(b);
    const Vector miss = b - gram * target;
    Vector direction;
    double t_max = 1.0;
    if (miss.norm() > 1e-12 * std::max(1.0, b.norm())) {
      // b has a component along the null space of the Gram matrix: the
      // restricted objective decreases linearly along it until a sign flips.
      direction = miss;
      t_max = std::numeric_limits<double>::infinity();
    } else {
      direction = target - za;
    }
    std::vector<double> candidates;
    for (Index a = 0; a < za.size(); ++a) {
      const double dv = direction(a);
      if (dv != 0.0 && za(a) * dv < 0.0) {
        const double t = -za(a) / dv;
        if (t > 0.0 && t < t_max) candidates.push_back(t);
      }
    }
    if (std::isfinite(t_max)) candidates.push_back(t_max);
    if (candidates.empty()) return z;
    Vector best = z;
    double best_obj = objective(z);
    bool moved = false;
    for (double t : candidates) {
      Vector trial = z;
      for (std::size_t a = 0; a < active.size(); ++a) {
        double v = za(static_cast<Index>(a)) + t * direction(static_cast<Index>(a));
        if (std::abs(v) <= 1e-15 * std::max(1.0, std::abs(za(static_cast<Index>(a))))) v = 0.0;
        trial(active[a]) = v;
      }
      // Crossing points land exactly on zero for the crossing coordinate.
      for (std::size_t a = 0; a < active.size(); ++a) {
        const double dv = direction(static_cast<Index>(a));
        if (dv != 0.0 && std::abs(-za(static_cast<Index>(a)) / dv - t) <= 1e-15 * std::max(1.0, t)) {
          trial(active[a]) = 0.0;
        }
      }
      const double obj = objective(trial);
      if (obj < best_obj) {
        best_obj = obj;
        best = std::move(trial);
        moved = true;
      }
    }
    if (!moved) return z;
    z = std::move(best);
    for (Index j = 0; j < k; ++j) {
      theta(j) = z(j) > 0.0 ? 1.0 : (z(j) < 0.0 ? -1.0 : 0.0);
    }
  }
  return z;
}

LassoSolution finalize(const Matrix& dict, const Vector& x, double lambda, Vector z,
                       double zero_threshold) {
  LassoSolution sol;
  sol.lambda = lambda;
  sol.code = SparseCode::from_vector(std::move(z), zero_threshold);
  sol.residual = x - dict * sol.code.z;
  sol.correlations = dict.transpose() * sol.residual;
  sol.objective = 0.5 * sol.residual.squaredNorm() + lambda * sol.code.z.lpNorm<1>();
  sol.duality_gap = duality_gap(dict, x, sol.code.z, lambda);
  return sol;
}

}  // namespace

double objective_value(const Matrix& dict, const Vector& x, const Vector& z, double lambda) {
  if (z.size() != dict.cols() || x.size() != dict.rows()) {
    throw UsageError("objective_value: dimension mismatch");
  }
  return 0.5 * (x - dict * z).squaredNorm() + lambda * z.lpNorm<1>();
}

double duality_gap(const Matrix& dict, const Vector& x, const Vector& z, double lambda) {
  const Vector r = x - dict * z;
  const double primal = 0.5 * r.squaredNorm() + lambda * z.lpNorm<1>();
  const double cmax = (dict.transpose() * r).lpNorm<Eigen::Infinity>();
  const double scale = cmax > lambda ? lambda / cmax : 1.0;
  const Vector theta = scale * r;
  const double dual = 0.5 * x.squaredNorm() - 0.5 * (x - theta).squaredNorm();
  return std::max(0.0, primal - dual);
}

LassoSolution encode(const Dictionary& dict, const Vector& x, double lambda,
                     const LassoOptions& options) {
  const Matrix& d = dict.matrix();
  check_inputs(d, x, lambda);
  const Index k = d.cols();
  const long max_sweeps =
      options.max_iters > 0 ? options.max_iters : 100L * static_cast<long>(k * d.rows());

  Vector z = Vector::Zero(k);
  if (x.isZero(0.0)) {
    LassoSolution sol = finalize(d, x, lambda, std::move(z), options.zero_threshold);
    sol.converged = true;
    return sol;
  }

  const Vector col_sq = d.colwise().squaredNorm().transpose();
  Vector r = x;
  double gap = duality_gap(d, x, z, lambda);
  long sweep = 0;
  while (gap > options.gap_tol && sweep < max_sweeps) {
    ++sweep;
    for (Index j = 0; j < k; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double old = z(j);
      const double rho = d.col(j).dot(r) + col_sq(j) * old;
      const double updated = soft_threshold(rho, lambda) / col_sq(j);
      if (updated != old) {
        r.noalias() -= (updated - old) * d.col(j);
        z(j) = updated;
      }
    }
    gap = duality_gap(d, x, z, lambda);
    r = x - d * z;  // drop accumulated round-off from incremental updates
  }

  bool polished = false;
  if (options.polish) {
    Vector candidate = z;
    if (polish_on_support(d, x, lambda, options.zero_threshold, candidate)) {
      const double candidate_gap = duality_gap(d, x, candidate, lambda);
      if (candidate_gap <= gap) {
        z = std::move(candidate);
        gap = candidate_gap;
        polished = true;
      }
    }
  }

  if (options.polish && gap > options.gap_tol) {
    Vector candidate = feature_sign_search(d, x, lambda, z, options.zero_threshold,
                                           static_cast<int>(20 * k + 100));
    const double candidate_gap = duality_gap(d, x, candidate, lambda);
    if (candidate_gap < gap) {
      z = std::move(candidate);
      gap = candidate_gap;
      polished = true;
    }
  }

  LassoSolution sol = finalize(d, x, lambda, std::move(z), options.zero_threshold);
  sol.iterations = sweep;
  sol.polished = polished;
  sol.converged = sol.duality_gap <= options.gap_tol;
  return sol;
}

std::vector<LassoSolution> encode_sample(const Dictionary& dict, const Sample& sample,
                                         double lambda, const LassoOptions& options) {
  if (sample.dim() != dict.dim()) {
    throw UsageError("encode_sample: sample dimension does not match dictionary");
  }
  const Index m = sample.size();
  std::vector<LassoSolution> out(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (Index i = 0; i < m; ++i) {
    out[static_cast<std::size_t>(i)] = encode(dict, sample.x(i), lambda, options);
  }
  return out;
}

double check_osborne_identity(const LassoSolution& sol, double lambda) {
  // (x - Dz)^T D z = sum_j z_j <D_j, x - Dz> = z^T c.
  const double lhs = sol.code.z.dot(sol.correlations);
  return std::abs(lhs - lambda * sol.code.z.lpNorm<1>());
}

double kkt_residual(const LassoSolution& sol, double lambda) {
  double worst = 0.0;
  const Vector& z = sol.code.z;
  for (Index j = 0; j < z.size(); ++j) {
    const double c = sol.correlations(j);
    if (z(j) != 0.0) {
      worst = std::max(worst, std::abs(c - lambda * (z(j) > 0.0 ? 1.0 : -1.0)));
    } else {
      worst = std::max(worst, std::abs(c) - lambda);
    }
  }
  return worst;
}

}  // namespace sparsestab::lasso
