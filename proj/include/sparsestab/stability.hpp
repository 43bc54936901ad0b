#pragma once

#include "sparsestab/certificates.hpp"
#include "sparsestab/core.hpp"
#include "sparsestab/lasso.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sparsestab::stability {

/// Safety margin applied when hypotheses with strict inequalities are
/// checked numerically. Used only for admissibility.
inline constexpr double kAdmissibilitySlack = 1e-9;

/// Absolute tolerance granted to a concluded inequality. Used only for
/// conclusions; never mixed with kAdmissibilitySlack.
inline constexpr double kConclusionTolerance = 1e-11;

/// Pass/fail tally for one concluded inequality. Slack is bound minus
/// measured value; negative slack beyond kConclusionTolerance is a failure.
struct InequalityTally {
  std::string name;
  long n_admissible = 0;
  long n_pass = 0;
  double worst_slack = 0.0;  // meaningful only when n_admissible > 0
};

/// One trial. `slack[i]` belongs to checks[i] of the owning report and is
/// empty when that inequality was not checked on this trial.
struct TrialOutcome {
  long trial = 0;
  bool admissible = false;
  std::string reason;  // why the trial was inadmissible
  double epsilon = 0.0;
  double epsilon_actual = 0.0;
  std::vector<std::optional<double>> slack;
};

/// Everything needed to replay a failing trial.
struct FailureInstance {
  std::string inequality;
  long trial = 0;
  Matrix dict;
  Matrix dict_tilde;
  Vector x;
  double lambda = 0.0;
  double epsilon = 0.0;
  double slack = 0.0;
};

struct TrialReport {
  std::string experiment;
  std::uint64_t seed = 0;
  long n_trials = 0;
  long n_admissible = 0;
  std::vector<InequalityTally> checks;
  std::map<std::string, long> inadmissible_reasons;
  std::vector<TrialOutcome> trials;
  std::vector<FailureInstance> failures;

  /// Folds another report of the same experiment into this one. Counts add,
  /// worst slacks take the minimum; trial indices of `other` are offset.
  void merge(const TrialReport& other);

  const InequalityTally& check(const std::string& name) const;
  long total_failures() const;
  bool all_pass() const { return total_failures() == 0; }
};

/// Maximum number of failing instances kept verbatim in a report.
inline constexpr std::size_t kMaxRecordedFailures = 8;

/// D + eps * G / ||G||_2 for Gaussian G, projected onto the unit ball per
/// column. If projection pushes ||D~ - D||_2 above eps the difference is
/// shrunk toward D, which keeps every column inside the ball by convexity.
Dictionary perturb_dictionary(const Dictionary& dict, double epsilon, Rng& rng);

struct ExperimentOptions {
  long n_trials = 100;
  /// Requested epsilon is this multiple of the permissible radius. Values
  /// above 1 leave the hypotheses; such trials are labelled inadmissible.
  double epsilon_scale = 1.0;
  lasso::LassoOptions lasso{};
  /// Incoherence must be exact inside experiments.
  std::uint64_t subset_budget = cert::kDefaultSubsetBudget;
};

/// Margin-based stability: tau is the exact point margin at sparsity s minus
/// the admissibility slack, tau' = tau_prime_fraction * tau and
/// eps = tau'^2 lambda / 43. Checks, per admissible trial: code distance,
/// zero codes on the margin set, and retained correlation margin.
TrialReport verify_theorem1(const Dictionary& dict, const Vector& x, double lambda, Index s,
                            double tau_prime_fraction, Rng& rng,
                            const ExperimentOptions& options = {});

/// Support-preserving stability under the stronger sign/magnitude
/// conditions. tau is the smaller of the smallest active magnitude and the
/// off-support correlation margin, minus the admissibility slack.
TrialReport verify_theorem2(const Dictionary& dict, const Vector& x, double lambda, Index s,
                            Rng& rng, const ExperimentOptions& options = {});

/// Optimal-value, reconstructor-norm, reconstructor and sparsity
/// preservation inequalities at a fixed eps <= lambda. The sparsity check
/// uses `tau` (default: the smallest admissible value plus the slack) and
/// the index set {i : |c_i| < lambda - tau}.
TrialReport verify_lemmas(const Dictionary& dict, const Vector& x, double lambda,
                          double epsilon, Rng& rng, const ExperimentOptions& options = {},
                          std::optional<double> tau = std::nullopt);

/// Smallest tau for which sparsity preservation is guaranteed at eps.
double sparsity_tau_threshold(double epsilon, double lambda);

/// Difference bound for encoders of U S and U' S with random isometries
/// U, U' (d x k, d >= k) and a random x in the unit ball per trial. Half of
/// the trials draw U' as a small rotation of U. Requires 2s <= k.
TrialReport verify_isometry_difference_bound(const Dictionary& s_dict, Index s, Index d,
                                             double lambda, Rng& rng,
                                             const ExperimentOptions& options = {});

/// Random instance for the perturbation experiments: unit-norm Gaussian
/// atoms (or orthonormal atoms), a point built from `target_s` atoms plus
/// noise, and the largest lambda on a grid in [lambda_min, lambda_max] whose
/// code has exactly `target_s` nonzeros.
struct SyntheticInstance {
  Dictionary dict;
  Vector x;
  double lambda = 0.0;
  Index s = 0;
};

struct SyntheticOptions {
  Index d_min = 8, d_max = 32;
  Index k_min = 4, k_max = 16;
  double lambda_min = 0.05, lambda_max = 0.5;
  int lambda_grid = 46;
  bool orthonormal = false;  // requires d >= k
  double noise = 0.02;
};

std::optional<SyntheticInstance> synthetic_instance(Index target_s, Rng& rng,
                                                    const SyntheticOptions& options = {});

}  // namespace sparsestab::stability
