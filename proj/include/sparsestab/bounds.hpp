#pragma once

#include "sparsestab/core.hpp"
#include "sparsestab/lasso.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sparsestab::bounds {

enum class Regime { Overcomplete, InfiniteDimensional };
/// Adaptive: the final display with the prior spread over (s, mu). Fixed:
/// the intermediate form for s and mu chosen in advance.
enum class Form { Adaptive, Fixed };

const char* to_string(Regime regime);
const char* to_string(Form form);
Regime regime_from_string(const std::string& name);

struct BoundInputs {
  double m = 0.0;
  double d = 0.0;
  double k = 0.0;
  double s = 0.0;
  double lambda = 0.0;
  double r = 0.0;
  double b = 0.0;
  double L = 0.0;
  double delta = 0.0;
  double mu_s = 0.0;
  double mu_2s = 0.0;  // only the infinite-dimensional bound reads this
  double margin_s = 0.0;
};

struct BoundTerm {
  std::string name;
  double value = 0.0;
};

struct BoundReport {
  Regime regime = Regime::Overcomplete;
  Form form = Form::Adaptive;
  BoundInputs inputs;
  std::vector<BoundTerm> terms;
  double total = 0.0;  // sum of terms, in order
  /// Sample-size threshold; applicability needs m > m_min (overcomplete) or
  /// m >= m_min (infinite-dimensional).
  double m_min = 0.0;
  bool applicable = false;
  std::string reason;  // empty when applicable
  std::vector<std::string> warnings;
  std::optional<double> alpha;  // infinite-dimensional regime only

  double term(const std::string& name) const;
};

/// Overcomplete-regime bound. Terms: uniform_deviation, margin_covering,
/// stability, prior_adjustment. In adaptive form the first three carry the
/// fixed-(s, mu) constants and prior_adjustment holds the difference, so the
/// total is the adaptive value. Throws UsageError if mu_s or margin_s is not
/// positive or other inputs are out of domain.
BoundReport eval_theorem3(const BoundInputs& in, Form form = Form::Adaptive);

/// Infinite-dimensional bound. Terms: gaussian_complexity,
/// uniform_deviation, stability, margin_ghost, prior_adjustment (same
/// convention as above). Does not read d. Throws UsageError if mu_2s or
/// mu_s is not positive.
BoundReport eval_theorem4(const BoundInputs& in, Form form = Form::Adaptive);

BoundReport evaluate(Regime regime, const BoundInputs& in, Form form = Form::Adaptive);

/// Count of ghost-sample points not covered by the stability guarantee:
/// dk log(3096 / (margin^2 lambda)) + log(2m + 1) + log(1/delta).
double eval_eta(double m, double d, double k, double margin, double lambda, double delta);

struct CoveringNumbers {
  double log_proper_dictionary = 0.0;  // dk log(8/eps)
  double log_hypothesis = 0.0;         // (d+1)k log(8 (r/2)^{1/(d+1)} / eps)
};

/// Natural-log covering-number bounds. Throws UsageError if eps <= 0.
CoveringNumbers eval_covering_numbers(double d, double k, double r, double epsilon);

struct GaussianAverageResult {
  double estimate = 0.0;
  double standard_error = 0.0;
  double bound = 0.0;  // 4 r k sqrt(2s) / (mu_2s(S) sqrt(m))
  double mu_2s = 0.0;
  long admissible_isometries = 0;
  long discarded_isometries = 0;
  long draws = 0;
};

/// Monte Carlo lower estimate of E sup_U (2/m) sum_i g_i <w, phi_{US}(x_i)>,
/// the sup taken over random d x k isometries whose encoders are s-sparse on
/// X. S is k x k with unit-ball columns; ||w|| <= r. Throws UsageError if
/// mu_2s(S) = 0, 2s > k, d < k, or no isometry is admissible.
GaussianAverageResult monte_carlo_gaussian_average(const Dictionary& s_dict, const Vector& w,
                                                   const Sample& sample, Index s, double lambda,
                                                   double r, long n_isometries, long n_draws,
                                                   Rng& rng,
                                                   const lasso::LassoOptions& options = {});

}  // namespace sparsestab::bounds
