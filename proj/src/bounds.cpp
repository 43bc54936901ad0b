#include "sparsestab/bounds.hpp"

#include "sparsestab/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sparsestab::bounds {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

void check_common(const BoundInputs& in) {
  require(in.m >= 1.0 && std::isfinite(in.m), "bound inputs: m must be >= 1");
  require(in.k >= 1.0, "bound inputs: k must be >= 1");
  require(in.s >= 1.0 && in.s <= in.k, "bound inputs: s must satisfy 1 <= s <= k");
  require(in.lambda > 0.0, "bound inputs: lambda must be positive");
  require(in.r > 0.0, "bound inputs: r must be positive");
  require(in.b > 0.0, "bound inputs: b must be positive");
  require(in.L > 0.0, "bound inputs: L must be positive");
  require(in.delta > 0.0 && in.delta < 1.0, "bound inputs: delta must lie in (0, 1)");
  require(in.mu_s > 0.0, "bound inputs: mu_s must be positive (bound undefined at 0)");
}

double sum_terms(const std::vector<BoundTerm>& terms) {
  double total = 0.0;
  for (const auto& t : terms) total += t.value;
  return total;
}

}  // namespace

const char* to_string(Regime regime) {
  return regime == Regime::Overcomplete ? "overcomplete" : "infinite";
}

const char* to_string(Form form) { return form == Form::Adaptive ? "adaptive" : "fixed"; }

Regime regime_from_string(const std::string& name) {
  if (name == "overcomplete") return Regime::Overcomplete;
  if (name == "infinite") return Regime::InfiniteDimensional;
  throw UsageError("unknown regime '" + name + "' (expected overcomplete or infinite)");
}

double BoundReport::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value;
  }
  throw UsageError("bound report has no term named '" + name + "'");
}

double eval_eta(double m, double d, double k, double margin, double lambda, double delta) {
  require(margin > 0.0, "eval_eta: margin must be positive");
  require(lambda > 0.0, "eval_eta: lambda must be positive");
  require(delta > 0.0, "eval_eta: delta must be positive");
  return d * k * std::log(3096.0 / (margin * margin * lambda)) + std::log(2.0 * m + 1.0) +
         std::log(1.0 / delta);
}

CoveringNumbers eval_covering_numbers(double d, double k, double r, double epsilon) {
  require(epsilon > 0.0, "eval_covering_numbers: epsilon must be positive");
  require(r > 0.0, "eval_covering_numbers: r must be positive");
  CoveringNumbers out;
  out.log_proper_dictionary = d * k * std::log(8.0 / epsilon);
  out.log_hypothesis = (d + 1.0) * k * std::log(8.0 / epsilon) + k * std::log(r / 2.0);
  return out;
}

BoundReport eval_theorem3(const BoundInputs& in, Form form) {
  check_common(in);
  require(in.d >= 1.0, "bound inputs: d must be >= 1");
  require(in.margin_s > 0.0, "eval_theorem3: margin_s must be positive");
  BoundReport rep;
  rep.regime = Regime::Overcomplete;
  rep.form = form;
  rep.inputs = in;
  const double m = in.m, d = in.d, k = in.k, b = in.b, L = in.L, r = in.r;
  const double sqrt_s = std::sqrt(in.s);
  const double covering = d * k * std::log(3096.0 / (in.margin_s * in.margin_s * in.lambda)) +
                          std::log(2.0 * m + 1.0);
  const double base = (d + 1.0) * k * std::log(8.0 * m) + k * std::log(r / 2.0);

  const double fixed_conf = std::log(4.0 / in.delta);
  const double fixed_dev = 2.0 * b * std::sqrt(2.0 * (base + fixed_conf) / m);
  const double fixed_cov = (2.0 * b / m) * (covering + fixed_conf);
  const double fixed_stab = (4.0 * L / m) * (1.0 / in.lambda) * (1.0 + 3.0 * r * sqrt_s / in.mu_s);

  double adjustment = 0.0;
  if (form == Form::Adaptive) {
    const double log2_term = std::log2(4.0 / in.mu_s);
    const double prior_conf = std::log(2.0 * std::numbers::pi * std::numbers::pi * log2_term *
                                       log2_term * k / (3.0 * in.delta));
    const double dev = 2.0 * b * std::sqrt(2.0 * (base + prior_conf) / m);
    const double cov = (2.0 * b / m) * (covering + prior_conf);
    const double stab = (4.0 * L / m) * (1.0 / in.lambda) * (1.0 + 6.0 * r * sqrt_s / in.mu_s);
    adjustment = (dev + cov + stab) - (fixed_dev + fixed_cov + fixed_stab);
  }
  rep.terms = {{"uniform_deviation", fixed_dev},
               {"margin_covering", fixed_cov},
               {"stability", fixed_stab},
               {"prior_adjustment", adjustment}};
  rep.total = sum_terms(rep.terms);
  rep.m_min = 387.0 / (in.margin_s * in.margin_s * in.lambda);
  rep.applicable = m > rep.m_min;
  if (!rep.applicable) rep.reason = "m does not exceed 387 / (margin_s^2 lambda)";
  // The asymptotic reading assumes r <= m^min(d, k); the explicit value does not.
  if (std::log(r) > std::min(d, k) * std::log(m)) {
    rep.warnings.push_back("r exceeds m^min(d,k); the asymptotic rate assumption fails");
  }
  return rep;
}

BoundReport eval_theorem4(const BoundInputs& in, Form form) {
  check_common(in);
  require(in.mu_2s > 0.0, "eval_theorem4: mu_2s must be positive (bound undefined at 0)");
  require(in.margin_s > 0.0, "eval_theorem4: margin_s must be positive");
  BoundReport rep;
  rep.regime = Regime::InfiniteDimensional;
  rep.form = form;
  rep.inputs = in;
  const double m = in.m, k = in.k, b = in.b, L = in.L, r = in.r;
  const double sqrt_s = std::sqrt(in.s);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  const double base = (k * k + k) * std::log(8.0 * m) + k * std::log(r / 2.0);

  const double fixed_conf = std::log(4.0 / in.delta);
  const double fixed_gauss = 8.0 * L * sqrt_pi * r * k * sqrt_s / (in.mu_2s * std::sqrt(m));
  const double fixed_dev =
      b * std::sqrt(8.0 * (base + (std::log(m) + 1.0) * fixed_conf + std::log(2.0)) / m);
  const double fixed_stab = (1.0 / m) * (4.0 * L / in.lambda) * (3.0 * r * sqrt_s / in.mu_s + 1.0);
  const double fixed_ghost = (1.0 / m) * 8.0 * b * fixed_conf;

  const double a = std::log2(4.0 / in.mu_s) * std::log2(4.0 / in.mu_2s);
  rep.alpha = a * a;
  double adjustment = 0.0;
  if (form == Form::Adaptive) {
    const double conf = std::log(7.0 * *rep.alpha * k / in.delta);
    const double gauss = 16.0 * L * sqrt_pi * r * k * sqrt_s / (in.mu_2s * std::sqrt(m));
    const double dev = b * std::sqrt(8.0 * (base + (std::log(m) + 1.0) * conf + std::log(2.0)) / m);
    const double stab = (1.0 / m) * (4.0 * L / in.lambda) * (6.0 * r * sqrt_s / in.mu_s + 1.0);
    const double ghost = (1.0 / m) * 8.0 * b * conf;
    adjustment = (gauss + dev + stab + ghost) - (fixed_gauss + fixed_dev + fixed_stab + fixed_ghost);
  }
  rep.terms = {{"gaussian_complexity", fixed_gauss},
               {"uniform_deviation", fixed_dev},
               {"stability", fixed_stab},
               {"margin_ghost", fixed_ghost},
               {"prior_adjustment", adjustment}};
  rep.total = sum_terms(rep.terms);
  rep.m_min = 43.0 / (in.margin_s * in.margin_s * in.lambda);
  rep.applicable = m >= rep.m_min;
  if (!rep.applicable) rep.reason = "m is below 43 / (margin_s^2 lambda)";
  return rep;
}

BoundReport evaluate(Regime regime, const BoundInputs& in, Form form) {
  return regime == Regime::Overcomplete ? eval_theorem3(in, form) : eval_theorem4(in, form);
}

GaussianAverageResult monte_carlo_gaussian_average(const Dictionary& s_dict, const Vector& w,
                                                   const Sample& sample, Index s, double lambda,
                                                   double r, long n_isometries, long n_draws,
                                                   Rng& rng, const lasso::LassoOptions& options) {
  const Index k = s_dict.atoms();
  const Index d = sample.dim();
  require(s_dict.dim() == k, "gaussian average: S must be k x k");
  require(d >= k, "gaussian average: requires d >= k");
  require(s >= 1 && 2 * s <= k, "gaussian average: requires 1 <= 2s <= k");
  require(w.size() == k, "gaussian average: w must have length k");
  require(r > 0.0 && w.norm() <= r + kBallTolerance, "gaussian average: requires ||w|| <= r");
  require(n_isometries >= 1 && n_draws >= 2, "gaussian average: need >= 1 isometry and >= 2 draws");

  GaussianAverageResult out;
  Rng subset_rng(0);
  out.mu_2s = cert::s_incoherence(s_dict, 2 * s, subset_rng, {cert::kDefaultSubsetBudget, false}).value;
  // Singular values below k * machine epsilon are rank-deficiency round-off.
  const double rank_floor = static_cast<double>(k) * std::numeric_limits<double>::epsilon();
  require(out.mu_2s > rank_floor * rank_floor, "gaussian average: mu_2s(S) = 0");
  const Index m = sample.size();
  out.bound = 4.0 * r * static_cast<double>(k) * std::sqrt(2.0 * static_cast<double>(s)) /
              (out.mu_2s * std::sqrt(static_cast<double>(m)));

  const Rng base(rng.next_u64());
  std::vector<std::optional<Vector>> features(static_cast<std::size_t>(n_isometries));
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (long u = 0; u < n_isometries; ++u) {
    Rng local = base.derive(static_cast<std::uint64_t>(u));
    const Matrix iso = random_isometry(d, k, local);
    const Dictionary dict = project_columns_to_ball(iso * s_dict.matrix());
    Vector f(m);
    bool admissible = true;
    for (Index i = 0; i < m && admissible; ++i) {
      const auto sol = lasso::encode(dict, sample.x(i), lambda, options);
      if (!sol.converged || sol.code.nnz() > s) {
        admissible = false;
      } else {
        f(i) = w.dot(sol.z());
      }
    }
    if (admissible) features[static_cast<std::size_t>(u)] = std::move(f);
  }
  std::vector<Vector> kept;
  for (auto& f : features) {
    if (f) {
      kept.push_back(std::move(*f));
    } else {
      ++out.discarded_isometries;
    }
  }
  out.admissible_isometries = static_cast<long>(kept.size());
  require(!kept.empty(), "gaussian average: no admissible isometries found");

  Rng gauss = base.derive(static_cast<std::uint64_t>(n_isometries) + 1);
  double sum = 0.0, sum_sq = 0.0;
  const double scale = 2.0 / static_cast<double>(m);
  for (long t = 0; t < n_draws; ++t) {
    const Vector g = gauss.normal_vector(m);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& f : kept) best = std::max(best, scale * g.dot(f));
    sum += best;
    sum_sq += best * best;
  }
  const double n = static_cast<double>(n_draws);
  out.draws = n_draws;
  out.estimate = sum / n;
  const double var = std::max(0.0, (sum_sq - n * out.estimate * out.estimate) / (n - 1.0));
  out.standard_error = std::sqrt(var / n);
  return out;
}

}  // namespace sparsestab::bounds
