#pragma once

#include "sparsestab/certificates.hpp"
#include "sparsestab/core.hpp"
#include "sparsestab/lasso.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparsestab::train {

enum class LossKind { Logistic, Squared, HingeSquared };

const char* to_string(LossKind kind);
/// Throws UsageError for unknown names.
LossKind loss_from_string(const std::string& name);

/// Loss l(y, p) with derivative in p. The constants assume predictions are
/// bounded by B = r / (2 lambda), which holds because ||z||_1 <= 1/(2 lambda)
/// on the unit ball and ||w|| <= r.
struct Loss {
  LossKind kind = LossKind::Logistic;

  double value(double y, double p) const;
  double derivative(double y, double p) const;
  /// Lipschitz constant in p on [-B, B] (labels in [-1, 1]).
  double lipschitz(double bound_b) const;
  /// Upper bound on the loss over [-B, B].
  double max_value(double bound_b) const;
};

struct TrainConfig {
  double lambda = 0.1;
  double r = 1.0;
  LossKind loss = LossKind::Logistic;
  double rho0 = 0.1;
  /// Decay horizon of rho_t = rho0 t0 / (t0 + t); 0 selects t0 = m.
  double t0 = 0.0;
  int epochs = 20;
  Index k = 8;
  std::uint64_t seed = 0;
  bool update_dictionary = true;
  bool update_weights = true;
  lasso::LassoOptions lasso{};
  /// Subset budget for the per-epoch incoherence estimate.
  std::uint64_t trace_subset_budget = 20000;

  /// Throws UsageError unless lambda, r, rho0 > 0, epochs >= 0 and k >= 1.
  void validate() const;
  double prediction_bound() const { return r / (2.0 * lambda); }
  double lipschitz() const { return Loss{loss}.lipschitz(prediction_bound()); }
  double loss_bound() const { return Loss{loss}.max_value(prediction_bound()); }
};

struct EpochStats {
  int epoch = 0;
  /// (1/m) sum_i l(y_i, <w, z_i>) + (1/r) ||w||^2 for the predictive
  /// trainer; (1/m) sum_i (1/2 ||x_i - D z_i||^2 + lambda ||z_i||_1) for the
  /// reconstructive one.
  double objective = 0.0;
  double training_error = 0.0;  // sign disagreement rate (predictive only)
  Index max_support = 0;
  double margin = 0.0;  // sample margin at s = max_support (0 if s = k)
  double mu_s = 0.0;    // incoherence at s = max(1, max_support)
  cert::Estimate mu_mode = cert::Estimate::Exact;
  long skipped_points = 0;            // encoder failed to converge
  long skipped_dictionary_steps = 0;  // singular active Gram matrix
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
};

struct PredictiveModel {
  Hypothesis hypothesis;
  TrainTrace trace;
};

struct ReconstructiveModel {
  Dictionary dictionary;
  TrainTrace trace;
};

/// Gradients of one point's term l(y, <w, phi_D(x)>) + (1/r) ||w||^2.
struct PointGradient {
  lasso::LassoSolution encoding;
  double prediction = 0.0;
  double loss = 0.0;
  Vector grad_w;
  /// Implicit gradient of the loss through the encoder, holding the active
  /// set and its signs fixed: r beta^T - D beta z^T with
  /// beta_A = (D_A^T D_A)^{-1} (l'(p) w)_A and beta zero off A.
  Matrix grad_d;
  bool dictionary_gradient_defined = false;
};

PointGradient point_gradient(const Dictionary& dict, const Vector& w, const Vector& x, double y,
                             const TrainConfig& cfg);

struct StepOutcome {
  bool encoded = false;
  bool dictionary_step_skipped = false;
};

/// One projected SGD step at rate rho on (D, w).
StepOutcome predictive_gradient_step(Dictionary& dict, Vector& w, const Vector& x, double y,
                                     const TrainConfig& cfg, double rho);

/// Empirical objective (1/m) sum l + (1/r) ||w||^2 and error rate.
struct RiskSummary {
  double objective = 0.0;
  double training_error = 0.0;
  long failed_encodes = 0;
};
RiskSummary empirical_risk(const Hypothesis& h, const Sample& sample, const TrainConfig& cfg);

/// SGD on the supervised objective. The initial dictionary defaults to k
/// normalized Gaussian atoms drawn from the config seed; w starts at 0.
PredictiveModel train_predictive(const Sample& sample, const TrainConfig& cfg,
                                 const std::optional<Dictionary>& init = std::nullopt,
                                 const std::optional<Vector>& init_w = std::nullopt);

/// Alternating minimization of the reconstruction objective: encode every
/// point, then exact block-coordinate updates of each atom over the unit
/// ball. `cfg.epochs` counts alternations.
ReconstructiveModel train_reconstructive(const Sample& sample, const TrainConfig& cfg,
                                         const std::optional<Dictionary>& init = std::nullopt);

/// (1/m) sum_i 1/2 ||x_i - D z_i||^2 + lambda ||z_i||_1.
double reconstruction_objective(const Dictionary& dict, const Sample& sample, double lambda,
                                const lasso::LassoOptions& options = {});

/// k unit-norm Gaussian atoms in R^d.
Dictionary random_dictionary(Index d, Index k, Rng& rng);

}  // namespace sparsestab::train
