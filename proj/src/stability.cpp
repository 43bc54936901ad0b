#include "sparsestab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sparsestab::stability {
namespace {

struct TrialResult {
  TrialOutcome outcome;
  std::optional<FailureInstance> instance;  // filled only when a check fails
};

bool failed(const std::optional<double>& slack) {
  return slack.has_value() && *slack < -kConclusionTolerance;
}

template <typename Fn>
TrialReport run_trials(const std::string& experiment, const std::vector<std::string>& checks,
                       Rng& rng, long n_trials, Fn&& fn) {
  TrialReport report;
  report.experiment = experiment;
  const Rng base(rng.next_u64());
  report.seed = base.seed();
  report.n_trials = n_trials;
  for (const auto& name : checks) report.checks.push_back({name, 0, 0, 0.0});

  std::vector<TrialResult> results(static_cast<std::size_t>(std::max(0L, n_trials)));
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (long t = 0; t < n_trials; ++t) {
    Rng trial_rng = base.derive(static_cast<std::uint64_t>(t));
    results[static_cast<std::size_t>(t)] = fn(t, trial_rng);
  }

  for (auto& res : results) {
    auto& out = res.outcome;
    out.slack.resize(checks.size());
    if (!out.admissible) {
      ++report.inadmissible_reasons[out.reason];
    } else {
      ++report.n_admissible;
    }
    for (std::size_t c = 0; c < checks.size(); ++c) {
      if (!out.slack[c]) continue;
      auto& tally = report.checks[c];
      const double slack = *out.slack[c];
      tally.worst_slack = tally.n_admissible == 0 ? slack : std::min(tally.worst_slack, slack);
      ++tally.n_admissible;
      if (!failed(out.slack[c])) {
        ++tally.n_pass;
      } else if (res.instance && report.failures.size() < kMaxRecordedFailures) {
        FailureInstance f = *res.instance;
        f.inequality = checks[c];
        f.trial = out.trial;
        f.slack = slack;
        report.failures.push_back(std::move(f));
      }
    }
    report.trials.push_back(std::move(out));
  }
  return report;
}

TrialReport all_inadmissible(const std::string& experiment,
                             const std::vector<std::string>& checks, Rng& rng, long n_trials,
                             const std::string& reason) {
  return run_trials(experiment, checks, rng, n_trials, [&](long t, Rng&) {
    TrialResult r;
    r.outcome.trial = t;
    r.outcome.reason = reason;
    return r;
  });
}

FailureInstance snapshot(const Dictionary& d, const Dictionary& dt, const Vector& x,
                         double lambda, double eps) {
  FailureInstance f;
  f.dict = d.matrix();
  f.dict_tilde = dt.matrix();
  f.x = x;
  f.lambda = lambda;
  f.epsilon = eps;
  return f;
}

bool any_failed(const TrialOutcome& o) {
  return std::any_of(o.slack.begin(), o.slack.end(), failed);
}

double max_abs_on(const Vector& v, const std::vector<Index>& idx) {
  double out = 0.0;
  for (Index i : idx) out = std::max(out, std::abs(v(i)));
  return out;
}

double measured_norm(const Matrix& e, Rng& rng) {
  return operator_norm_power(e, rng, 1e-10, 500).norm;
}

cert::SubsetOptions exact_only(const ExperimentOptions& options) {
  return {options.subset_budget, false};
}

}  // namespace

void TrialReport::merge(const TrialReport& other) {
  if (checks.empty()) {
    checks = other.checks;
    for (auto& c : checks) c.n_admissible = c.n_pass = 0;
    if (experiment.empty()) experiment = other.experiment;
  }
  for (std::size_t c = 0; c < checks.size() && c < other.checks.size(); ++c) {
    const auto& o = other.checks[c];
    if (o.n_admissible > 0) {
      checks[c].worst_slack =
          checks[c].n_admissible == 0 ? o.worst_slack : std::min(checks[c].worst_slack, o.worst_slack);
    }
    checks[c].n_admissible += o.n_admissible;
    checks[c].n_pass += o.n_pass;
  }
  const long offset = n_trials;
  n_trials += other.n_trials;
  n_admissible += other.n_admissible;
  for (const auto& [reason, count] : other.inadmissible_reasons) inadmissible_reasons[reason] += count;
  for (auto t : other.trials) {
    t.trial += offset;
    trials.push_back(std::move(t));
  }
  for (auto f : other.failures) {
    if (failures.size() >= kMaxRecordedFailures) break;
    f.trial += offset;
    failures.push_back(std::move(f));
  }
}

const InequalityTally& TrialReport::check(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw UsageError("trial report has no check named '" + name + "'");
}

long TrialReport::total_failures() const {
  long out = 0;
  for (const auto& c : checks) out += c.n_admissible - c.n_pass;
  return out;
}

Dictionary perturb_dictionary(const Dictionary& dict, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw UsageError("perturb_dictionary: epsilon must be finite and >= 0");
  }
  if (epsilon == 0.0) return dict;
  const Matrix& d = dict.matrix();
  Matrix g = rng.normal_matrix(d.rows(), d.cols());
  const double gnorm = spectral_norm(g);
  if (gnorm == 0.0) return dict;
  Dictionary projected = project_columns_to_ball(d + (epsilon / gnorm) * g);
  Matrix e = projected.matrix() - d;
  const double enorm = spectral_norm(e);
  if (enorm <= epsilon) return projected;
  // Shrink slightly more than needed so round-off cannot land above epsilon.
  const double t = (epsilon / enorm) * (1.0 - 1e-12);
  return Dictionary(d + t * e);
}

TrialReport verify_theorem1(const Dictionary& dict, const Vector& x, double lambda, Index s,
                            double tau_prime_fraction, Rng& rng,
                            const ExperimentOptions& options) {
  const std::vector<std::string> checks = {"code_distance", "margin_set_inactive",
                                           "margin_retention"};
  const std::string name = "sparse_coding_stability";
  const Index k = dict.atoms();
  if (s < 1 || s >= k) throw UsageError("verify_theorem1: s must satisfy 1 <= s <= k - 1");
  if (!(tau_prime_fraction > 0.0 && tau_prime_fraction < 1.0)) {
    throw UsageError("verify_theorem1: tau_prime_fraction must lie in (0, 1)");
  }

  const auto sol = lasso::encode(dict, x, lambda, options.lasso);
  if (!sol.converged) return all_inadmissible(name, checks, rng, options.n_trials, "encoder did not converge");
  const double margin = cert::margin_from_correlations(sol.correlations, lambda, s);
  const double tau = margin - kAdmissibilitySlack;
  if (!(tau > 0.0)) return all_inadmissible(name, checks, rng, options.n_trials, "margin not positive");
  Rng subset_rng(0);
  const double mu_d = cert::s_incoherence(dict, s, subset_rng, exact_only(options)).value;
  if (!(mu_d > kAdmissibilitySlack)) {
    return all_inadmissible(name, checks, rng, options.n_trials, "incoherence of D is zero");
  }
  const auto margin_idx = cert::margin_set(sol.correlations, lambda, s);
  const double tau_prime = tau_prime_fraction * tau;
  const double epsilon = options.epsilon_scale * cert::prp_theorem1(tau_prime, lambda);
  // The experiment's hypothesis is eps <= tau'^2 lambda / 43 for the designated
  // tau'; scaled radii above it are out of hypothesis.
  const double nominal = cert::prp_theorem1(tau_prime, lambda);
  // Effective tau' for margin retention at the epsilon actually used.
  const double tau_prime_eff = std::sqrt(43.0 * epsilon / lambda);
  const double sqrt_s = std::sqrt(static_cast<double>(s));

  return run_trials(name, checks, rng, options.n_trials, [&](long t, Rng& trng) {
    TrialResult r;
    auto& o = r.outcome;
    o.trial = t;
    o.epsilon = epsilon;
    o.slack.resize(checks.size());
    const Dictionary dt = perturb_dictionary(dict, epsilon, trng);
    o.epsilon_actual = measured_norm(dt.matrix() - dict.matrix(), trng);
    if (epsilon > nominal) {
      o.reason = "epsilon exceeds permissible radius";
      return r;
    }
    if (o.epsilon_actual > epsilon * (1.0 + 1e-9)) {
      o.reason = "perturbation norm exceeds epsilon";
      return r;
    }
    Rng local(0);
    const double mu_dt = cert::s_incoherence(dt, s, local, exact_only(options)).value;
    const double mu = std::min(mu_d, mu_dt);
    if (!(mu > kAdmissibilitySlack)) {
      o.reason = "incoherence of perturbed dictionary is zero";
      return r;
    }
    const auto pert = lasso::encode(dt, x, lambda, options.lasso);
    if (!pert.converged) {
      o.reason = "encoder did not converge on perturbed dictionary";
      return r;
    }
    o.admissible = true;
    const double dist = (sol.z() - pert.z()).norm();
    o.slack[0] = 3.0 * epsilon * sqrt_s / (lambda * mu) - dist;
    o.slack[1] = -max_abs_on(pert.z(), margin_idx);
    o.slack[2] = (lambda - (tau - tau_prime_eff)) - max_abs_on(pert.correlations, margin_idx);
    if (any_failed(o)) r.instance = snapshot(dict, dt, x, lambda, epsilon);
    return r;
  });
}

TrialReport verify_theorem2(const Dictionary& dict, const Vector& x, double lambda, Index s,
                            Rng& rng, const ExperimentOptions& options) {
  const std::vector<std::string> checks = {"support_equality", "code_distance"};
  const std::string name = "restricted_stability";
  const Index k = dict.atoms();
  if (s < 1 || s > k) throw UsageError("verify_theorem2: s must satisfy 1 <= s <= k");

  const auto sol = lasso::encode(dict, x, lambda, options.lasso);
  if (!sol.converged) return all_inadmissible(name, checks, rng, options.n_trials, "encoder did not converge");
  if (sol.code.nnz() > s) {
    return all_inadmissible(name, checks, rng, options.n_trials, "code has more than s nonzeros");
  }
  double min_active = std::numeric_limits<double>::infinity();
  for (Index j : sol.code.support) min_active = std::min(min_active, std::abs(sol.z()(j)));
  double off_margin = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < k; ++j) {
    if (sol.z()(j) == 0.0) off_margin = std::min(off_margin, lambda - std::abs(sol.correlations(j)));
  }
  const double tau = std::min(min_active, off_margin) - kAdmissibilitySlack;
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    return all_inadmissible(name, checks, rng, options.n_trials,
                            "active magnitude or off-support margin not positive");
  }
  Rng subset_rng(0);
  const double mu_d = cert::s_incoherence(dict, s, subset_rng, exact_only(options)).value;
  if (!(mu_d > kAdmissibilitySlack)) {
    return all_inadmissible(name, checks, rng, options.n_trials, "incoherence of D is zero");
  }
  const double sd = static_cast<double>(s);
  // mu must lower-bound the incoherence of every admissible D~. Weyl's
  // inequality gives sigma_min(D~_L) >= sqrt(mu_s(D)) - eps, and eps grows
  // with mu, so one fixed-point step yields a consistent pair.
  const double shrink = std::sqrt(mu_d) - cert::prp_theorem2(tau, lambda, mu_d, sd);
  if (!(shrink > 0.0)) {
    return all_inadmissible(name, checks, rng, options.n_trials,
                            "permissible radius exceeds incoherence");
  }
  const double mu = shrink * shrink;
  const double prp = cert::prp_theorem2(tau, lambda, mu, sd);
  const double epsilon = options.epsilon_scale * prp;

  return run_trials(name, checks, rng, options.n_trials, [&](long t, Rng& trng) {
    TrialResult r;
    auto& o = r.outcome;
    o.trial = t;
    o.epsilon = epsilon;
    o.slack.resize(checks.size());
    const Dictionary dt = perturb_dictionary(dict, epsilon, trng);
    o.epsilon_actual = measured_norm(dt.matrix() - dict.matrix(), trng);
    if (epsilon > prp) {
      o.reason = "epsilon exceeds permissible radius";
      return r;
    }
    if (o.epsilon_actual > epsilon * (1.0 + 1e-9)) {
      o.reason = "perturbation norm exceeds epsilon";
      return r;
    }
    Rng local(0);
    const double mu_dt = cert::s_incoherence(dt, s, local, exact_only(options)).value;
    if (!(mu_dt >= mu)) {
      o.reason = "incoherence of perturbed dictionary below mu";
      return r;
    }
    const auto pert = lasso::encode(dt, x, lambda, options.lasso);
    if (!pert.converged) {
      o.reason = "encoder did not converge on perturbed dictionary";
      return r;
    }
    o.admissible = true;
    o.slack[0] = sol.code.support == pert.code.support ? 0.0 : -1.0;
    const double dist = (sol.z() - pert.z()).norm();
    o.slack[1] = (epsilon / mu) * (std::sqrt(sd) / lambda + 1.0) - dist;
    if (any_failed(o)) r.instance = snapshot(dict, dt, x, lambda, epsilon);
    return r;
  });
}

double sparsity_tau_threshold(double epsilon, double lambda) {
  return epsilon * (1.0 + 1.0 / lambda) + std::sqrt(26.0 * epsilon / lambda);
}

TrialReport verify_lemmas(const Dictionary& dict, const Vector& x, double lambda,
                          double epsilon, Rng& rng, const ExperimentOptions& options,
                          std::optional<double> tau) {
  const std::vector<std::string> checks = {"optimal_value", "reconstructor_norm",
                                           "reconstructor", "sparsity_preservation"};
  const std::string name = "perturbation_lemmas";
  if (!(lambda > 0.0)) throw UsageError("verify_lemmas: lambda must be positive");
  if (!(epsilon >= 0.0)) throw UsageError("verify_lemmas: epsilon must be >= 0");

  const auto sol = lasso::encode(dict, x, lambda, options.lasso);
  if (!sol.converged) return all_inadmissible(name, checks, rng, options.n_trials, "encoder did not converge");
  if (epsilon > lambda) return all_inadmissible(name, checks, rng, options.n_trials, "epsilon exceeds lambda");

  const double threshold = sparsity_tau_threshold(epsilon, lambda);
  const double tau_used = tau.value_or(threshold + kAdmissibilitySlack);
  const bool sparsity_admissible = tau_used >= threshold + kAdmissibilitySlack;
  std::vector<Index> inactive;
  for (Index i = 0; i < dict.atoms(); ++i) {
    if (std::abs(sol.correlations(i)) < lambda - tau_used) inactive.push_back(i);
  }
  const Vector recon = dict.matrix() * sol.z();
  const double recon_sq = recon.squaredNorm();

  return run_trials(name, checks, rng, options.n_trials, [&](long t, Rng& trng) {
    TrialResult r;
    auto& o = r.outcome;
    o.trial = t;
    o.epsilon = epsilon;
    o.slack.resize(checks.size());
    const Dictionary dt = perturb_dictionary(dict, epsilon, trng);
    o.epsilon_actual = measured_norm(dt.matrix() - dict.matrix(), trng);
    if (o.epsilon_actual > epsilon * (1.0 + 1e-9)) {
      o.reason = "perturbation norm exceeds epsilon";
      return r;
    }
    const auto pert = lasso::encode(dt, x, lambda, options.lasso);
    if (!pert.converged) {
      o.reason = "encoder did not converge on perturbed dictionary";
      return r;
    }
    o.admissible = true;
    const double ratio = epsilon / lambda;
    o.slack[0] = ratio - std::abs(sol.objective - pert.objective);
    const Vector pert_recon = dt.matrix() * pert.z();
    o.slack[1] = 2.0 * ratio - std::abs(recon_sq - pert_recon.squaredNorm());
    o.slack[2] = 26.0 * ratio - (recon - dict.matrix() * pert.z()).squaredNorm();
    if (sparsity_admissible && !inactive.empty()) {
      o.slack[3] = -max_abs_on(pert.z(), inactive);
    }
    if (any_failed(o)) r.instance = snapshot(dict, dt, x, lambda, epsilon);
    return r;
  });
}

TrialReport verify_isometry_difference_bound(const Dictionary& s_dict, Index s, Index d,
                                             double lambda, Rng& rng,
                                             const ExperimentOptions& options) {
  const std::vector<std::string> checks = {"isometry_difference"};
  const std::string name = "isometry_difference_bound";
  const Index k = s_dict.atoms();
  if (s_dict.dim() != k) throw UsageError("verify_isometry_difference_bound: S must be k x k");
  if (d < k) throw UsageError("verify_isometry_difference_bound: requires d >= k");
  if (s < 1 || 2 * s > k) throw UsageError("verify_isometry_difference_bound: requires 1 <= 2s <= k");

  Rng subset_rng(0);
  const double mu_2s = cert::s_incoherence(s_dict, 2 * s, subset_rng, exact_only(options)).value;
  if (!(mu_2s > kAdmissibilitySlack)) {
    return all_inadmissible(name, checks, rng, options.n_trials, "2s-incoherence of S is zero");
  }
  const double norm_2s = cert::restricted_two_norm(s_dict, 2 * s, subset_rng, exact_only(options)).value;
  const double factor = 2.0 * norm_2s / mu_2s;

  return run_trials(name, checks, rng, options.n_trials, [&](long t, Rng& trng) {
    TrialResult r;
    auto& o = r.outcome;
    o.trial = t;
    o.slack.resize(checks.size());
    const Matrix u = random_isometry(d, k, trng);
    Matrix u2;
    if (t % 2 == 0) {
      u2 = random_isometry(d, k, trng);
    } else {
      // A nearby isometry: orthonormalize a small perturbation of U.
      const double scale = std::pow(10.0, trng.uniform(-4.0, -1.0));
      const Matrix g = u + scale * trng.normal_matrix(d, k);
      Eigen::HouseholderQR<Matrix> qr(g);
      u2 = qr.householderQ() * Matrix::Identity(d, k);
      const Matrix rr = qr.matrixQR().topRows(k);
      for (Index j = 0; j < k; ++j) {
        if (rr(j, j) < 0.0) u2.col(j) = -u2.col(j);
      }
    }
    const Vector x = random_on_sphere(d, trng, std::pow(trng.uniform(), 1.0 / static_cast<double>(d)));
    const Dictionary d1 = project_columns_to_ball(u * s_dict.matrix());
    const Dictionary d2 = project_columns_to_ball(u2 * s_dict.matrix());
    const auto z1 = lasso::encode(d1, x, lambda, options.lasso);
    const auto z2 = lasso::encode(d2, x, lambda, options.lasso);
    if (!z1.converged || !z2.converged) {
      o.reason = "encoder did not converge";
      return r;
    }
    if (z1.code.nnz() > s || z2.code.nnz() > s) {
      o.reason = "code has more than s nonzeros";
      return r;
    }
    o.admissible = true;
    const double lhs = (z1.z() - z2.z()).norm();
    const double rhs = factor * ((u2 - u).transpose() * x).norm();
    o.slack[0] = rhs - lhs;
    if (any_failed(o)) r.instance = snapshot(d1, d2, x, lambda, 0.0);
    return r;
  });
}

std::optional<SyntheticInstance> synthetic_instance(Index target_s, Rng& rng,
                                                    const SyntheticOptions& options) {
  const auto draw_int = [&](Index lo, Index hi) {
    return lo + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  };
  Index k = draw_int(std::max(options.k_min, target_s + 1), options.k_max);
  Index d = draw_int(options.d_min, options.d_max);
  if (options.orthonormal) d = std::max(d, k);

  Matrix atoms;
  if (options.orthonormal) {
    atoms = random_isometry(d, k, rng);
  } else {
    atoms = rng.normal_matrix(d, k);
    for (Index j = 0; j < k; ++j) atoms.col(j).normalize();
  }
  Dictionary dict = project_columns_to_ball(atoms);

  std::vector<Index> cols(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) cols[static_cast<std::size_t>(j)] = j;
  rng.shuffle(cols);
  Vector code = Vector::Zero(k);
  for (Index a = 0; a < target_s; ++a) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    code(cols[static_cast<std::size_t>(a)]) = sign * rng.uniform(0.3, 1.0);
  }
  Vector x = dict.matrix() * code + options.noise * rng.normal_vector(d);
  x *= rng.uniform(0.6, 1.0) / x.norm();

  for (int g = 0; g < options.lambda_grid; ++g) {
    const double frac = options.lambda_grid == 1
                            ? 0.0
                            : static_cast<double>(g) / static_cast<double>(options.lambda_grid - 1);
    const double lambda = options.lambda_max - frac * (options.lambda_max - options.lambda_min);
    const auto sol = lasso::encode(dict, x, lambda);
    if (sol.converged && sol.code.nnz() == target_s) {
      return SyntheticInstance{dict, x, lambda, target_s};
    }
  }
  return std::nullopt;
}

}  // namespace sparsestab::stability
