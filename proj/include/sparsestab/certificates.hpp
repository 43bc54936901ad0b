#pragma once

#include "sparsestab/core.hpp"
#include "sparsestab/lasso.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparsestab::cert {

/// Exact results come from enumerating every s-subset. Sampled results come
/// from a random selection of subsets: an upper estimate when minimizing
/// (incoherence), a lower estimate when maximizing (restricted norm).
enum class Estimate { Exact, Sampled };

const char* to_string(Estimate e);

inline constexpr std::uint64_t kDefaultSubsetBudget = 200000;

struct SubsetOptions {
  std::uint64_t budget = kDefaultSubsetBudget;
  /// When false, a subset count above the budget is a UsageError.
  bool allow_sampling = true;
};

struct SubsetExtremum {
  double value = 0.0;
  Estimate mode = Estimate::Exact;
  std::vector<Index> subset;  // a subset attaining `value`
  std::uint64_t subsets_examined = 0;
};

/// min over s-column subsets of sigma_s(D_Lambda)^2. A subset wider than d
/// has sigma_s = 0.
SubsetExtremum s_incoherence(const Dictionary& dict, Index s, Rng& rng,
                             const SubsetOptions& options = {});

/// max over s-column subsets of sigma_max(S_Lambda).
SubsetExtremum restricted_two_norm(const Dictionary& dict, Index s, Rng& rng,
                                   const SubsetOptions& options = {});

/// (s+1)-th smallest of lambda - |c_j|, clamped to [0, lambda]. Requires
/// 0 <= s < k.
double margin_from_correlations(const Vector& correlations, double lambda, Index s);

/// The k - s atoms whose margins lambda - |c_j| are the largest, i.e. the
/// index set realizing the max in the max-min form of the margin. Ties are
/// broken by atom index so the set is deterministic. Sorted ascending.
std::vector<Index> margin_set(const Vector& correlations, double lambda, Index s);

/// Margin of D on one point. Throws ConvergenceError if encoding fails.
double point_margin(const Dictionary& dict, const Vector& x, double lambda, Index s,
                    const lasso::LassoOptions& options = {});

/// Minimum point margin over the sample. Throws ConvergenceError if any
/// point fails to encode.
double sample_margin(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                     const lasso::LassoOptions& options = {});

/// Sample margins for every s in [0, k), computed from one encoding pass.
std::vector<double> margin_profile(const std::vector<lasso::LassoSolution>& codes,
                                   double lambda);

struct SparsityResult {
  bool sparse = false;
  Index max_support = 0;
};

SparsityResult is_s_sparse(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                           const lasso::LassoOptions& options = {});

/// tau^2 lambda / 43.
double prp_theorem1(double tau, double lambda);

/// tau mu / ((s + mu) / lambda + sqrt(s) + mu).
double prp_theorem2(double tau, double lambda, double mu, double s);

struct StabilityCertificate {
  Index d = 0;  // dictionary shape
  Index k = 0;
  Index s = 0;
  double lambda = 0.0;
  Index m = 0;
  Index max_support = 0;
  double mu_s = 0.0;
  Estimate mu_s_mode = Estimate::Exact;
  /// Absent when 2s > k.
  std::optional<double> mu_2s;
  Estimate mu_2s_mode = Estimate::Exact;
  double margin_s = 0.0;
  /// Smallest nonzero code magnitude over the sample (infinity if all codes
  /// are zero).
  double min_active_magnitude = 0.0;
  /// PRP for the margin-based stability result with tau = margin_s.
  double prp_thm1 = 0.0;
  /// tau used for the support-preserving result: the smaller of margin_s
  /// and min_active_magnitude. Only meaningful when max_support <= s.
  double tau_thm2 = 0.0;
  double prp_thm2 = 0.0;
  std::string sample_hash;
};

/// Full certificate for (D, X, lambda) at sparsity level s >= 1.
StabilityCertificate certify(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                             Rng& rng, const SubsetOptions& subsets = {},
                             const lasso::LassoOptions& options = {});

}  // namespace sparsestab::cert
