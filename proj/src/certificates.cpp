#include "sparsestab/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparsestab::cert {
namespace {

struct Candidate {
  double value;
  std::uint64_t order;  // enumeration rank or sample index; breaks ties
  std::vector<Index> subset;
};

bool better(const Candidate& a, const Candidate& b, bool minimize) {
  if (a.value != b.value) return minimize ? a.value < b.value : a.value > b.value;
  return a.order < b.order;
}

template <typename Score>
SubsetExtremum subset_extremum(const Dictionary& dict, Index s, Rng& rng,
                               const SubsetOptions& options, bool minimize, Score score,
                               const char* what) {
  const Index k = dict.atoms();
  if (s < 1 || s > k) {
    throw UsageError(std::string(what) + ": s must satisfy 1 <= s <= k (s = " +
                     std::to_string(s) + ", k = " + std::to_string(k) + ")");
  }
  const std::uint64_t total =
      n_choose_k(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s));
  const bool exact = total <= options.budget;
  if (!exact) {
    if (!options.allow_sampling) {
      throw UsageError(std::string(what) + ": " + std::to_string(total) +
                       " subsets exceed the enumeration budget and sampling is disabled");
    }
    if (options.budget == 0) throw UsageError(std::string(what) + ": sampling budget is 0");
  }

  const Matrix& a = dict.matrix();
  const double worst = minimize ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
  SubsetExtremum out;
  out.mode = exact ? Estimate::Exact : Estimate::Sampled;

  if (exact) {
    const int threads = worker_threads();
    const std::uint64_t chunks =
        std::min<std::uint64_t>(total, static_cast<std::uint64_t>(threads) * 16);
    std::vector<Candidate> best(chunks, Candidate{worst, std::numeric_limits<std::uint64_t>::max(), {}});
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
      const std::uint64_t lo = total / chunks * c + std::min<std::uint64_t>(c, total % chunks);
      const std::uint64_t len = total / chunks + (static_cast<std::uint64_t>(c) < total % chunks);
      std::vector<Index> combo = unrank_combination(k, s, lo);
      Candidate& slot = best[static_cast<std::size_t>(c)];
      for (std::uint64_t i = 0; i < len; ++i) {
        const double v = score(select_columns(a, combo));
        Candidate cand{v, lo + i, {}};
        if (slot.subset.empty() || better(cand, slot, minimize)) {
          cand.subset = combo;
          slot = std::move(cand);
        }
        if (i + 1 < len) next_combination(combo, k);
      }
    }
    Candidate winner = best.front();
    for (const auto& cand : best) {
      if (better(cand, winner, minimize)) winner = cand;
    }
    out.value = winner.value;
    out.subset = std::move(winner.subset);
    out.subsets_examined = total;
    return out;
  }

  std::vector<std::vector<Index>> draws(options.budget);
  std::vector<Index> pool(static_cast<std::size_t>(k));
  for (auto& draw : draws) {
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index i = 0; i < s; ++i) {
      const auto j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(k - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    draw.assign(pool.begin(), pool.begin() + s);
    std::sort(draw.begin(), draw.end());
  }
  std::vector<double> values(draws.size());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(draws.size()); ++i) {
    values[static_cast<std::size_t>(i)] = score(select_columns(a, draws[static_cast<std::size_t>(i)]));
  }
  std::size_t arg = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (minimize ? values[i] < values[arg] : values[i] > values[arg]) arg = i;
  }
  out.value = values[arg];
  out.subset = draws[arg];
  out.subsets_examined = draws.size();
  return out;
}

double min_singular_squared(const Matrix& block) {
  if (block.cols() > block.rows()) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(block);
  const double smin = svd.singularValues()(block.cols() - 1);
  return smin * smin;
}

double max_singular(const Matrix& block) {
  Eigen::JacobiSVD<Matrix> svd(block);
  return svd.singularValues()(0);
}

std::vector<double> sorted_margins(const Vector& correlations, double lambda) {
  std::vector<double> margins(static_cast<std::size_t>(correlations.size()));
  for (Index j = 0; j < correlations.size(); ++j) {
    margins[static_cast<std::size_t>(j)] = lambda - std::abs(correlations(j));
  }
  std::sort(margins.begin(), margins.end());
  return margins;
}

double clamp_margin(double v, double lambda) { return std::clamp(v, 0.0, lambda); }

void require_converged(const lasso::LassoSolution& sol, const char* what) {
  if (!sol.converged) {
    throw ConvergenceError(std::string(what) + ": encoder did not reach the gap tolerance (gap " +
                           std::to_string(sol.duality_gap) + ")");
  }
}

}  // namespace

const char* to_string(Estimate e) {
  return e == Estimate::Exact ? "exact" : "sampled";
}

SubsetExtremum s_incoherence(const Dictionary& dict, Index s, Rng& rng,
                             const SubsetOptions& options) {
  return subset_extremum(dict, s, rng, options, true, min_singular_squared, "s_incoherence");
}

SubsetExtremum restricted_two_norm(const Dictionary& dict, Index s, Rng& rng,
                                   const SubsetOptions& options) {
  return subset_extremum(dict, s, rng, options, false, max_singular, "restricted_two_norm");
}

double margin_from_correlations(const Vector& correlations, double lambda, Index s) {
  if (s < 0 || s >= correlations.size()) {
    throw UsageError("margin: s must satisfy 0 <= s <= k - 1");
  }
  const auto margins = sorted_margins(correlations, lambda);
  return clamp_margin(margins[static_cast<std::size_t>(s)], lambda);
}

std::vector<Index> margin_set(const Vector& correlations, double lambda, Index s) {
  const Index k = correlations.size();
  if (s < 0 || s > k) throw UsageError("margin_set: s must satisfy 0 <= s <= k");
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return lambda - std::abs(correlations(a)) < lambda - std::abs(correlations(b));
  });
  std::vector<Index> out(order.begin() + s, order.end());
  std::sort(out.begin(), out.end());
  return out;
}

double point_margin(const Dictionary& dict, const Vector& x, double lambda, Index s,
                    const lasso::LassoOptions& options) {
  const auto sol = lasso::encode(dict, x, lambda, options);
  require_converged(sol, "point_margin");
  return margin_from_correlations(sol.correlations, lambda, s);
}

double sample_margin(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                     const lasso::LassoOptions& options) {
  if (s < 0 || s >= dict.atoms()) throw UsageError("sample_margin: s must satisfy 0 <= s <= k - 1");
  const auto codes = lasso::encode_sample(dict, sample, lambda, options);
  double out = lambda;
  for (const auto& sol : codes) {
    require_converged(sol, "sample_margin");
    out = std::min(out, margin_from_correlations(sol.correlations, lambda, s));
  }
  return out;
}

std::vector<double> margin_profile(const std::vector<lasso::LassoSolution>& codes,
                                   double lambda) {
  if (codes.empty()) throw UsageError("margin_profile: empty sample");
  const auto k = static_cast<std::size_t>(codes.front().correlations.size());
  std::vector<double> profile(k, lambda);
  for (const auto& sol : codes) {
    require_converged(sol, "margin_profile");
    const auto margins = sorted_margins(sol.correlations, lambda);
    for (std::size_t s = 0; s < k; ++s) {
      profile[s] = std::min(profile[s], clamp_margin(margins[s], lambda));
    }
  }
  return profile;
}

SparsityResult is_s_sparse(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                           const lasso::LassoOptions& options) {
  const auto codes = lasso::encode_sample(dict, sample, lambda, options);
  SparsityResult out;
  for (const auto& sol : codes) {
    require_converged(sol, "is_s_sparse");
    out.max_support = std::max(out.max_support, sol.code.nnz());
  }
  out.sparse = out.max_support <= s;
  return out;
}

double prp_theorem1(double tau, double lambda) {
  if (tau < 0.0 || !(lambda > 0.0)) {
    throw UsageError("prp_theorem1: requires tau >= 0 and lambda > 0");
  }
  return tau * tau * lambda / 43.0;
}

double prp_theorem2(double tau, double lambda, double mu, double s) {
  if (tau < 0.0 || !(lambda > 0.0) || s < 1.0) {
    throw UsageError("prp_theorem2: requires tau >= 0, lambda > 0, s >= 1");
  }
  if (!(mu > 0.0)) throw UsageError("prp_theorem2: requires mu > 0");
  return tau * mu / ((s + mu) / lambda + std::sqrt(s) + mu);
}

StabilityCertificate certify(const Dictionary& dict, const Sample& sample, double lambda, Index s,
                             Rng& rng, const SubsetOptions& subsets,
                             const lasso::LassoOptions& options) {
  const Index k = dict.atoms();
  if (s < 1 || s > k) throw UsageError("certify: s must satisfy 1 <= s <= k");
  StabilityCertificate c;
  c.d = dict.dim();
  c.k = k;
  c.s = s;
  c.lambda = lambda;
  c.m = sample.size();
  c.sample_hash = sample_fingerprint(sample);

  const auto codes = lasso::encode_sample(dict, sample, lambda, options);
  c.margin_s = lambda;
  c.min_active_magnitude = std::numeric_limits<double>::infinity();
  for (const auto& sol : codes) {
    require_converged(sol, "certify");
    c.max_support = std::max(c.max_support, sol.code.nnz());
    for (Index j : sol.code.support) {
      c.min_active_magnitude = std::min(c.min_active_magnitude, std::abs(sol.code.z(j)));
    }
  }
  // margin_s at s = k is vacuous (no inactive atoms remain); report 0.
  c.margin_s = s < k ? margin_profile(codes, lambda)[static_cast<std::size_t>(s)] : 0.0;

  const auto mu = s_incoherence(dict, s, rng, subsets);
  c.mu_s = mu.value;
  c.mu_s_mode = mu.mode;
  if (2 * s <= k) {
    const auto mu2 = s_incoherence(dict, 2 * s, rng, subsets);
    c.mu_2s = mu2.value;
    c.mu_2s_mode = mu2.mode;
  }

  c.prp_thm1 = prp_theorem1(c.margin_s, lambda);
  c.tau_thm2 = std::min(c.margin_s, c.min_active_magnitude);
  c.prp_thm2 = c.mu_s > 0.0 ? prp_theorem2(c.tau_thm2, lambda, c.mu_s, static_cast<double>(s)) : 0.0;
  return c;
}

}  // namespace sparsestab::cert
