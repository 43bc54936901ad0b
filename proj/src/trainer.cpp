#include "sparsestab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparsestab::train {
namespace {

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void project_to_radius(Vector& w, double r) {
  const double n = w.norm();
  if (n > r) w *= r / n;
}

EpochStats summarize(int epoch, const Dictionary& dict,
                     const std::vector<lasso::LassoSolution>& codes, double lambda,
                     std::uint64_t budget, Rng& rng) {
  EpochStats st;
  st.epoch = epoch;
  std::vector<lasso::LassoSolution> ok;
  ok.reserve(codes.size());
  for (const auto& c : codes) {
    if (c.converged) {
      ok.push_back(c);
      st.max_support = std::max(st.max_support, c.code.nnz());
    } else {
      ++st.skipped_points;
    }
  }
  const Index k = dict.atoms();
  if (!ok.empty() && st.max_support < k) {
    st.margin = cert::margin_profile(ok, lambda)[static_cast<std::size_t>(st.max_support)];
  }
  const auto mu = cert::s_incoherence(dict, std::max<Index>(1, st.max_support), rng,
                                      {budget, true});
  st.mu_s = mu.value;
  st.mu_mode = mu.mode;
  return st;
}

Dictionary initial_dictionary(const Sample& sample, Index k, Rng& rng, bool from_data) {
  const Index d = sample.dim();
  if (!from_data || k > sample.size()) return random_dictionary(d, k, rng);
  std::vector<Index> idx(static_cast<std::size_t>(sample.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  rng.shuffle(idx);
  Matrix atoms(d, k);
  for (Index j = 0; j < k; ++j) {
    Vector col = sample.x(idx[static_cast<std::size_t>(j)]);
    if (col.norm() == 0.0) col = rng.normal_vector(d);
    atoms.col(j) = col.normalized();
  }
  return project_columns_to_ball(atoms);
}

}  // namespace

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Logistic: return "logistic";
    case LossKind::Squared: return "squared";
    case LossKind::HingeSquared: return "hinge-squared";
  }
  return "unknown";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "logistic") return LossKind::Logistic;
  if (name == "squared") return LossKind::Squared;
  if (name == "hinge-squared") return LossKind::HingeSquared;
  throw UsageError("unknown loss '" + name + "' (expected logistic, squared or hinge-squared)");
}

double Loss::value(double y, double p) const {
  switch (kind) {
    case LossKind::Logistic: return softplus(-y * p);
    case LossKind::Squared: return 0.5 * (y - p) * (y - p);
    case LossKind::HingeSquared: {
      const double h = std::max(0.0, 1.0 - y * p);
      return h * h;
    }
  }
  return 0.0;
}

double Loss::derivative(double y, double p) const {
  switch (kind) {
    case LossKind::Logistic: return -y * sigmoid(-y * p);
    case LossKind::Squared: return p - y;
    case LossKind::HingeSquared: return -2.0 * y * std::max(0.0, 1.0 - y * p);
  }
  return 0.0;
}

double Loss::lipschitz(double bound_b) const {
  switch (kind) {
    case LossKind::Logistic: return 1.0;
    case LossKind::Squared: return 1.0 + bound_b;
    case LossKind::HingeSquared: return 2.0 * (1.0 + bound_b);
  }
  return 0.0;
}

double Loss::max_value(double bound_b) const {
  switch (kind) {
    case LossKind::Logistic: return softplus(bound_b);
    case LossKind::Squared: return 0.5 * (1.0 + bound_b) * (1.0 + bound_b);
    case LossKind::HingeSquared: return (1.0 + bound_b) * (1.0 + bound_b);
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be positive");
  if (!(r > 0.0) || !std::isfinite(r)) throw UsageError("r must be positive");
  if (!(rho0 > 0.0) || !std::isfinite(rho0)) throw UsageError("rho0 must be positive");
  if (t0 < 0.0) throw UsageError("t0 must be >= 0");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (k < 1) throw UsageError("k must be >= 1");
}

Dictionary random_dictionary(Index d, Index k, Rng& rng) {
  Matrix atoms(d, k);
  for (Index j = 0; j < k; ++j) atoms.col(j) = random_on_sphere(d, rng);
  return project_columns_to_ball(atoms);
}

PointGradient point_gradient(const Dictionary& dict, const Vector& w, const Vector& x, double y,
                             const TrainConfig& cfg) {
  PointGradient g;
  g.encoding = lasso::encode(dict, x, cfg.lambda, cfg.lasso);
  const Vector& z = g.encoding.z();
  const Loss loss{cfg.loss};
  g.prediction = w.dot(z);
  g.loss = loss.value(y, g.prediction);
  const double dl = loss.derivative(y, g.prediction);
  g.grad_w = dl * z + (2.0 / cfg.r) * w;

  const auto& support = g.encoding.code.support;
  g.grad_d = Matrix::Zero(dict.dim(), dict.atoms());
  if (support.empty()) {
    g.dictionary_gradient_defined = true;
    return g;
  }
  const Matrix sub = select_columns(dict.matrix(), support);
  Eigen::LDLT<Matrix> ldlt(sub.transpose() * sub);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return g;
  const auto diag = ldlt.vectorD();
  if (diag.minCoeff() <= 1e-12 * std::max(1.0, diag.maxCoeff())) return g;

  Vector rhs(static_cast<Index>(support.size()));
  for (std::size_t a = 0; a < support.size(); ++a) rhs(static_cast<Index>(a)) = dl * w(support[a]);
  const Vector beta_active = ldlt.solve(rhs);
  Vector beta = Vector::Zero(dict.atoms());
  for (std::size_t a = 0; a < support.size(); ++a) beta(support[a]) = beta_active(static_cast<Index>(a));

  g.grad_d = g.encoding.residual * beta.transpose() - (dict.matrix() * beta) * z.transpose();
  g.dictionary_gradient_defined = true;
  return g;
}

StepOutcome predictive_gradient_step(Dictionary& dict, Vector& w, const Vector& x, double y,
                                     const TrainConfig& cfg, double rho) {
  StepOutcome out;
  const PointGradient g = point_gradient(dict, w, x, y, cfg);
  if (!g.encoding.converged) return out;
  out.encoded = true;
  if (cfg.update_weights) {
    w -= rho * g.grad_w;
    project_to_radius(w, cfg.r);
  }
  if (cfg.update_dictionary) {
    if (g.dictionary_gradient_defined) {
      dict = project_columns_to_ball(dict.matrix() - rho * g.grad_d);
    } else {
      out.dictionary_step_skipped = true;
    }
  }
  return out;
}

RiskSummary empirical_risk(const Hypothesis& h, const Sample& sample, const TrainConfig& cfg) {
  if (!sample.has_labels()) throw DataError("empirical_risk: sample has no labels");
  const auto codes = lasso::encode_sample(h.dictionary, sample, cfg.lambda, cfg.lasso);
  const Loss loss{cfg.loss};
  RiskSummary out;
  double total = 0.0;
  long wrong = 0;
  for (Index i = 0; i < sample.size(); ++i) {
    const auto& sol = codes[static_cast<std::size_t>(i)];
    if (!sol.converged) ++out.failed_encodes;
    const double p = h.w.dot(sol.z());
    total += loss.value(sample.y(i), p);
    if ((p > 0.0 ? 1.0 : -1.0) != (sample.y(i) > 0.0 ? 1.0 : -1.0)) ++wrong;
  }
  const double m = static_cast<double>(sample.size());
  out.objective = total / m + h.w.squaredNorm() / h.r;
  out.training_error = static_cast<double>(wrong) / m;
  return out;
}

PredictiveModel train_predictive(const Sample& sample, const TrainConfig& cfg,
                                 const std::optional<Dictionary>& init,
                                 const std::optional<Vector>& init_w) {
  cfg.validate();
  if (!sample.has_labels()) throw DataError("train_predictive: sample has no labels");
  Rng rng(cfg.seed);
  Dictionary dict = init ? *init : initial_dictionary(sample, cfg.k, rng, false);
  if (dict.dim() != sample.dim()) throw UsageError("initial dictionary dimension mismatch");
  Vector w = init_w ? *init_w : Vector::Zero(dict.atoms());
  if (w.size() != dict.atoms()) throw UsageError("initial weight length mismatch");
  project_to_radius(w, cfg.r);

  const Index m = sample.size();
  const double t0 = cfg.t0 > 0.0 ? cfg.t0 : static_cast<double>(m);
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  PredictiveModel model;
  long t = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    long skipped = 0, skipped_d = 0;
    for (Index i : order) {
      const double rho = cfg.rho0 * t0 / (t0 + static_cast<double>(t));
      const auto step = predictive_gradient_step(dict, w, sample.x(i), sample.y(i), cfg, rho);
      if (!step.encoded) ++skipped;
      if (step.dictionary_step_skipped) ++skipped_d;
      ++t;
    }
    const auto codes = lasso::encode_sample(dict, sample, cfg.lambda, cfg.lasso);
    Rng metric_rng = Rng(cfg.seed).derive(static_cast<std::uint64_t>(epoch));
    EpochStats st = summarize(epoch, dict, codes, cfg.lambda, cfg.trace_subset_budget, metric_rng);
    const auto risk = empirical_risk(Hypothesis(dict, w, cfg.r), sample, cfg);
    st.objective = risk.objective;
    st.training_error = risk.training_error;
    st.skipped_points = skipped;
    st.skipped_dictionary_steps = skipped_d;
    model.trace.epochs.push_back(st);
  }
  model.hypothesis = Hypothesis(std::move(dict), std::move(w), cfg.r);
  return model;
}

double reconstruction_objective(const Dictionary& dict, const Sample& sample, double lambda,
                                const lasso::LassoOptions& options) {
  const auto codes = lasso::encode_sample(dict, sample, lambda, options);
  double total = 0.0;
  for (const auto& c : codes) total += c.objective;
  return total / static_cast<double>(sample.size());
}

ReconstructiveModel train_reconstructive(const Sample& sample, const TrainConfig& cfg,
                                         const std::optional<Dictionary>& init) {
  cfg.validate();
  Rng rng(cfg.seed);
  Dictionary dict = init ? *init : initial_dictionary(sample, cfg.k, rng, true);
  if (dict.dim() != sample.dim()) throw UsageError("initial dictionary dimension mismatch");
  const Index k = dict.atoms();
  const double m = static_cast<double>(sample.size());

  ReconstructiveModel model;
  auto codes = lasso::encode_sample(dict, sample, cfg.lambda, cfg.lasso);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Matrix a = Matrix::Zero(k, k);
    Matrix b = Matrix::Zero(dict.dim(), k);
    for (Index i = 0; i < sample.size(); ++i) {
      const auto& c = codes[static_cast<std::size_t>(i)];
      if (!c.converged) continue;
      a.noalias() += c.z() * c.z().transpose();
      b.noalias() += sample.x(i) * c.z().transpose();
    }
    Matrix atoms = dict.matrix();
    for (Index j = 0; j < k; ++j) {
      if (a(j, j) <= 0.0) continue;  // unused atom: objective is flat in it
      Vector u = (b.col(j) - atoms * a.col(j)) / a(j, j) + atoms.col(j);
      const double n = u.norm();
      if (n > 1.0) u /= n;
      atoms.col(j) = u;
    }
    dict = project_columns_to_ball(atoms);
    codes = lasso::encode_sample(dict, sample, cfg.lambda, cfg.lasso);

    Rng metric_rng = Rng(cfg.seed).derive(static_cast<std::uint64_t>(epoch));
    EpochStats st = summarize(epoch, dict, codes, cfg.lambda, cfg.trace_subset_budget, metric_rng);
    double total = 0.0;
    for (const auto& c : codes) total += c.objective;
    st.objective = total / m;
    model.trace.epochs.push_back(st);
  }
  model.dictionary = std::move(dict);
  return model;
}

}  // namespace sparsestab::train
