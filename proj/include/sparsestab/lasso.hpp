#pragma once

#include "sparsestab/core.hpp"

#include <vector>

namespace sparsestab::lasso {

struct LassoOptions {
  double gap_tol = 1e-10;
  /// Cap on full coordinate sweeps; 0 selects 100 * k * d.
  long max_iters = 0;
  double zero_threshold = kDefaultZeroThreshold;
  /// Re-solve the KKT linear system on the detected support once the gap
  /// criterion is met. The refined point is kept only if its sign pattern
  /// is consistent and its duality gap is no larger.
  bool polish = true;
};

/// Minimizer of 1/2 ||x - D z||^2 + lambda ||z||_1 together with the
/// quantities stability certificates are built from.
struct LassoSolution {
  SparseCode code;
  Vector residual;      // x - D z
  Vector correlations;  // D^T (x - D z)
  double duality_gap = 0.0;
  double objective = 0.0;
  double lambda = 0.0;
  long iterations = 0;
  bool converged = false;
  bool polished = false;

  const Vector& z() const { return code.z; }
};

/// Cyclic coordinate descent with a duality-gap stopping rule. The sweep
/// order is fixed, so the output is a deterministic function of the inputs.
/// Non-convergence is reported through `converged`, not thrown. Throws
/// UsageError on dimension mismatch or lambda <= 0.
LassoSolution encode(const Dictionary& dict, const Vector& x, double lambda,
                     const LassoOptions& options = {});

/// Encodes every point of a sample; parallel over points.
std::vector<LassoSolution> encode_sample(const Dictionary& dict, const Sample& sample,
                                         double lambda, const LassoOptions& options = {});

/// 1/2 ||x - D z||^2 + lambda ||z||_1.
double objective_value(const Matrix& dict, const Vector& x, const Vector& z, double lambda);

/// Gap between the primal objective at z and the dual objective at the
/// feasible rescaled residual theta = r * min(1, lambda / ||D^T r||_inf).
double duality_gap(const Matrix& dict, const Vector& x, const Vector& z, double lambda);

/// |(x - D z)^T D z - lambda ||z||_1|, which vanishes at any minimizer.
double check_osborne_identity(const LassoSolution& sol, double lambda);

/// Largest violation of the optimality conditions: on the support
/// |c_j - lambda sign(z_j)|, off the support max(0, |c_j| - lambda).
double kkt_residual(const LassoSolution& sol, double lambda);

}  // namespace sparsestab::lasso
