#include "cli.hpp"

#include "svg.hpp"

#include "sparsestab/artifacts.hpp"
#include "sparsestab/bounds.hpp"
#include "sparsestab/certificates.hpp"
#include "sparsestab/data_io.hpp"
#include "sparsestab/lasso.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace sparsestab::cli {
namespace {

namespace fs = std::filesystem;

struct DataArgs {
  std::string data = "synthetic";
  std::string normalization = "unit-norm";
  std::optional<double> positive_label;
  std::optional<long> subset;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.data,
                  "Dataset: a CSV path, idx:<images>,<labels>, or "
                  "synthetic[:d=..,k=..,m=..,s=..,noise=..,seed=..]");
  cmd->add_option("--normalization", a.normalization, "unit-norm or unit-ball");
  cmd->add_option("--positive-label", a.positive_label,
                  "Map this raw label to +1 and every other label to -1");
  cmd->add_option("--subset", a.subset, "Keep a seeded random subset of this many points");
}

io::SyntheticSpec parse_synthetic(const std::string& text) {
  io::SyntheticSpec spec;
  const auto colon = text.find(':');
  if (colon == std::string::npos) return spec;
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("synthetic option '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    try {
      if (key == "d") spec.d = std::stol(val);
      else if (key == "k") spec.k = std::stol(val);
      else if (key == "m") spec.m = std::stol(val);
      else if (key == "s") spec.s_star = std::stol(val);
      else if (key == "noise") spec.noise = std::stod(val);
      else if (key == "seed") spec.seed = std::stoull(val);
      else throw UsageError("unknown synthetic option '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const UsageError*>(&e)) throw;
      throw UsageError("synthetic option '" + item + "' is not a number");
    }
  }
  return spec;
}

Sample load_data(const DataArgs& a, std::uint64_t seed) {
  io::DatasetSpec spec;
  spec.normalization = io::normalization_from_string(a.normalization);
  if (a.positive_label) spec.labels = io::LabelMap::one_vs_all(*a.positive_label);
  if (a.subset) {
    spec.subset_size = *a.subset;
    spec.subset_seed = seed;
  }
  if (a.data.rfind("synthetic", 0) == 0) {
    spec.source = io::DatasetSpec::Source::Synthetic;
    spec.synthetic = parse_synthetic(a.data);
  } else if (a.data.rfind("idx:", 0) == 0) {
    const auto rest = a.data.substr(4);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw UsageError("--data idx: expects <images>,<labels>");
    spec.source = io::DatasetSpec::Source::Idx;
    spec.idx_images = rest.substr(0, comma);
    spec.idx_labels = rest.substr(comma + 1);
  } else {
    spec.source = io::DatasetSpec::Source::Csv;
    spec.csv_path = a.data;
  }
  return io::load_dataset(spec);
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string peek_kind(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path + "'");
  try {
    const auto env = io::Json::parse(in);
    return env.at("kind").get<std::string>();
  } catch (const io::Json::exception&) {
    throw io::IntegrityError("model '" + path + "' is not a readable artifact");
  }
}

struct LoadedModel {
  Dictionary dict;
  std::optional<double> lambda;
  std::optional<train::TrainConfig> config;
  std::optional<Hypothesis> hypothesis;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  const auto kind = peek_kind(path);
  if (kind == "hypothesis") {
    auto h = io::load_hypothesis(path);
    m.dict = h.hypothesis.dictionary;
    m.lambda = h.config.lambda;
    m.config = h.config;
    m.hypothesis = h.hypothesis;
  } else if (kind == "dictionary") {
    auto d = io::load_dictionary(path);
    m.dict = d.dictionary;
    m.lambda = d.lambda_hint;
  } else {
    throw DataError("model '" + path + "' holds a " + kind + ", not a dictionary or hypothesis");
  }
  return m;
}

std::pair<Index, Index> parse_s_range(const std::string& text, Index k) {
  Index lo = 0, hi = 0;
  try {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      lo = hi = std::stol(text);
    } else {
      lo = std::stol(text.substr(0, colon));
      hi = std::stol(text.substr(colon + 1));
    }
  } catch (const std::logic_error&) {
    throw UsageError("--s expects an integer or a range a:b");
  }
  if (lo < 1 || hi < lo) throw UsageError("--s range must satisfy 1 <= a <= b");
  if (hi > k) {
    throw UsageError("--s " + std::to_string(hi) + " exceeds the number of atoms k = " +
                     std::to_string(k));
  }
  return {lo, hi};
}

void write_text(const std::string& path, const std::string& text) {
  io::write_file_atomic(path, text);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  double lambda = 0.1;
  long k = 8;
  int epochs = 20;
  double rho0 = 0.1;
  double r = 1.0;
  std::string loss = "logistic";
  std::string mode = "predictive";
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  train::TrainConfig cfg;
  cfg.lambda = a.lambda;
  cfg.k = a.k;
  cfg.epochs = a.epochs;
  cfg.rho0 = a.rho0;
  cfg.r = a.r;
  cfg.loss = train::loss_from_string(a.loss);
  cfg.seed = a.seed;
  cfg.validate();
  if (a.mode != "predictive" && a.mode != "reconstructive") {
    throw UsageError("--mode must be predictive or reconstructive");
  }
  const Sample sample = load_data(a.data, a.seed);
  const auto norm = io::normalization_from_string(a.data.normalization);
  const train::TrainTrace* trace = nullptr;
  std::string model_file;
  train::PredictiveModel pm;
  train::ReconstructiveModel rm;
  if (a.mode == "predictive") {
    pm = train::train_predictive(sample, cfg);
    model_file = out_path(a.out_dir, "model.json");
    io::save_hypothesis(model_file, {pm.hypothesis, cfg, norm});
    trace = &pm.trace;
  } else {
    rm = train::train_reconstructive(sample, cfg);
    model_file = out_path(a.out_dir, "model.json");
    io::save_dictionary(model_file, {rm.dictionary, cfg.lambda, norm});
    trace = &rm.trace;
  }
  write_text(out_path(a.out_dir, "trace.csv"), io::trace_csv(*trace));
  out << "trained " << a.mode << " model on " << sample.size() << " points -> " << model_file
      << "\n";
  if (!trace->epochs.empty()) {
    const auto& last = trace->epochs.back();
    out << "final objective " << last.objective << ", max support " << last.max_support << "\n";
  }
  return kOk;
}

// ---- certify -------------------------------------------------------------

struct CertifyArgs {
  DataArgs data;
  std::string model;
  std::optional<double> lambda;
  std::optional<std::string> s;
  std::uint64_t seed = 0;
  std::uint64_t subset_budget = cert::kDefaultSubsetBudget;
  std::string format = "json";
  std::string out_dir = ".";
};

std::string certificates_csv(const std::vector<cert::StabilityCertificate>& cs) {
  std::string out =
      "s,lambda,m,max_support,mu_s,mu_s_mode,mu_2s,margin_s,min_active_magnitude,prp_thm1,"
      "tau_thm2,prp_thm2\n";
  for (const auto& c : cs) {
    out += std::to_string(c.s) + ',' + fmt(c.lambda) + ',' + std::to_string(c.m) + ',' +
           std::to_string(c.max_support) + ',' + fmt(c.mu_s) + ',' + cert::to_string(c.mu_s_mode) +
           ',' + (c.mu_2s ? fmt(*c.mu_2s) : std::string()) + ',' + fmt(c.margin_s) + ',' +
           fmt(c.min_active_magnitude) + ',' + fmt(c.prp_thm1) + ',' + fmt(c.tau_thm2) + ',' +
           fmt(c.prp_thm2) + '\n';
  }
  return out;
}

std::vector<cert::StabilityCertificate> certify_range(const CertifyArgs& a, const LoadedModel& model,
                                                      const Sample& sample) {
  const Index k = model.dict.atoms();
  if (sample.dim() != model.dict.dim()) {
    throw DataError("data dimension " + std::to_string(sample.dim()) +
                    " differs from dictionary dimension " + std::to_string(model.dict.dim()));
  }
  const double lambda = a.lambda ? *a.lambda : (model.lambda ? *model.lambda : -1.0);
  if (!(lambda > 0.0)) throw UsageError("lambda must be positive (pass --lambda)");
  const auto [lo, hi] = parse_s_range(a.s.value_or("1:" + std::to_string(std::min<Index>(k, 4))), k);
  lasso::LassoOptions lasso_opts = model.config ? model.config->lasso : lasso::LassoOptions{};
  std::vector<cert::StabilityCertificate> cs;
  for (Index s = lo; s <= hi; ++s) {
    Rng rng = Rng(a.seed).derive(static_cast<std::uint64_t>(s));
    cs.push_back(cert::certify(model.dict, sample, lambda, s, rng, {a.subset_budget, true}, lasso_opts));
  }
  return cs;
}

int cmd_certify(const CertifyArgs& a, std::ostream& out) {
  if (a.format != "json" && a.format != "csv") throw UsageError("--format must be json or csv");
  if (a.model.empty()) throw UsageError("certify requires --model");
  const LoadedModel model = load_model(a.model);
  const Sample sample = load_data(a.data, a.seed);
  const auto cs = certify_range(a, model, sample);
  std::string file;
  if (a.format == "json") {
    file = out_path(a.out_dir, "certificate.json");
    io::save_certificates(file, cs);
  } else {
    file = out_path(a.out_dir, "certificate.csv");
    write_text(file, certificates_csv(cs));
  }
  for (const auto& c : cs) {
    out << "s=" << c.s << " mu_s=" << c.mu_s << " margin_s=" << c.margin_s
        << " max_support=" << c.max_support << "\n";
  }
  out << "wrote " << file << "\n";
  return kOk;
}

// ---- verify --------------------------------------------------------------

struct VerifyArgs {
  VerifyOptions options;
  std::string out_dir = ".";
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const auto report = run_verification(a.options);
  io::write_file_atomic(out_path(a.out_dir, "report.json"), io::to_json(report).dump(1) + "\n");
  write_text(out_path(a.out_dir, "slack.csv"), io::trial_slack_csv(report));
  out << report.experiment << ": " << report.n_admissible << " admissible of " << report.n_trials
      << " trials\n";
  for (const auto& c : report.checks) {
    out << "  " << c.name << ": " << c.n_pass << "/" << c.n_admissible << " pass";
    if (c.n_admissible > 0) out << ", worst slack " << c.worst_slack;
    out << "\n";
  }
  return kOk;
}

// ---- bound ---------------------------------------------------------------

struct BoundArgs {
  std::string regime = "overcomplete";
  std::string form = "adaptive";
  std::optional<std::string> certificate;
  std::optional<long> cert_s;
  std::optional<double> m, d, k, s, lambda, mu_s, mu_2s, margin;
  double r = 1.0;
  std::string loss = "logistic";
  double delta = 0.05;
  std::string format = "json";
  std::string out_dir = ".";
};

bounds::BoundInputs bound_inputs(const BoundArgs& a) {
  bounds::BoundInputs in;
  if (a.certificate) {
    const auto cs = io::load_certificates(*a.certificate);
    if (cs.empty()) throw DataError("certificate file holds no certificates");
    const cert::StabilityCertificate* c = &cs.front();
    if (a.cert_s) {
      c = nullptr;
      for (const auto& x : cs) {
        if (x.s == *a.cert_s) c = &x;
      }
      if (c == nullptr) throw UsageError("certificate file has no entry for s = " + std::to_string(*a.cert_s));
    }
    in.m = static_cast<double>(c->m);
    in.d = static_cast<double>(c->d);
    in.k = static_cast<double>(c->k);
    in.s = static_cast<double>(c->s);
    in.lambda = c->lambda;
    in.mu_s = c->mu_s;
    in.mu_2s = c->mu_2s.value_or(0.0);
    in.margin_s = c->margin_s;
  }
  auto take = [](const std::optional<double>& v, double& dst) {
    if (v) dst = *v;
  };
  take(a.m, in.m);
  take(a.d, in.d);
  take(a.k, in.k);
  take(a.s, in.s);
  take(a.lambda, in.lambda);
  take(a.mu_s, in.mu_s);
  take(a.mu_2s, in.mu_2s);
  take(a.margin, in.margin_s);
  in.r = a.r;
  in.delta = a.delta;
  train::TrainConfig cfg;
  cfg.lambda = in.lambda;
  cfg.r = a.r;
  cfg.loss = train::loss_from_string(a.loss);
  if (!(in.lambda > 0.0)) throw UsageError("bound requires lambda > 0");
  in.b = cfg.loss_bound();
  in.L = cfg.lipschitz();
  return in;
}

std::string bound_sweep_csv(bounds::Regime regime, const bounds::BoundInputs& base, bounds::Form form) {
  bounds::BoundInputs probe = base;
  probe.m = 1000.0;
  const auto names = bounds::evaluate(regime, probe, form).terms;
  std::string out = "m,total,applicable";
  for (const auto& t : names) out += "," + t.name;
  out += '\n';
  for (int e = 0; e <= 24; ++e) {
    bounds::BoundInputs in = base;
    in.m = std::round(std::pow(10.0, 3.0 + e / 8.0));
    const auto rep = bounds::evaluate(regime, in, form);
    out += fmt(in.m) + ',' + fmt(rep.total) + ',' + (rep.applicable ? "1" : "0");
    for (const auto& t : rep.terms) out += ',' + fmt(t.value);
    out += '\n';
  }
  return out;
}

int cmd_bound(const BoundArgs& a, std::ostream& out) {
  if (a.format != "json" && a.format != "csv") throw UsageError("--format must be json or csv");
  const auto regime = bounds::regime_from_string(a.regime);
  if (a.form != "adaptive" && a.form != "fixed") throw UsageError("--form must be adaptive or fixed");
  const auto form = a.form == "adaptive" ? bounds::Form::Adaptive : bounds::Form::Fixed;
  const auto in = bound_inputs(a);
  const auto rep = bounds::evaluate(regime, in, form);
  if (a.format == "json") {
    io::save_bound_report(out_path(a.out_dir, "bound.json"), rep);
  } else {
    std::string csv = "term,value\n";
    for (const auto& t : rep.terms) csv += t.name + ',' + fmt(t.value) + '\n';
    csv += "total," + fmt(rep.total) + '\n';
    write_text(out_path(a.out_dir, "bound.csv"), csv);
  }
  write_text(out_path(a.out_dir, "bound_vs_m.csv"), bound_sweep_csv(regime, in, form));
  out << bounds::to_string(regime) << " bound: total " << rep.total << " (m_min " << rep.m_min
      << ", " << (rep.applicable ? "applicable" : "not applicable: " + rep.reason) << ")\n";
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  return kOk;
}

// ---- margin-study --------------------------------------------------------

struct MarginArgs {
  DataArgs data;
  std::vector<long> ks{8, 16};
  std::vector<double> lambdas{0.1, 0.2, 0.3};
  int rho_max = 3;
  int epochs = 10;
  int warm_start = 30;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_margin_study(const MarginArgs& a, std::ostream& out) {
  if (a.rho_max < 0) throw UsageError("--rho-max must be >= 0");
  if (a.ks.empty() || a.lambdas.empty()) throw UsageError("--k and --lambda need at least one value");
  MarginStudyOptions opt;
  opt.ks.assign(a.ks.begin(), a.ks.end());
  opt.lambdas = a.lambdas;
  opt.rho_max = a.rho_max;
  opt.base.epochs = a.epochs;
  opt.warm_start_epochs = a.warm_start;
  opt.seed = a.seed;
  const Sample sample = load_data(a.data, a.seed);
  const auto result = run_margin_study(sample, opt);
  const std::string csv = margin_study_csv(result);
  write_text(out_path(a.out_dir, "margin_study.csv"), csv);
  for (long k : margin_csv_ks(csv)) {
    write_text(out_path(a.out_dir, "margin_k" + std::to_string(k) + ".svg"), render_margin_svg(csv, k));
  }
  for (const auto& c : result.curves) {
    out << "k=" << c.k << " lambda=" << c.lambda << " s*=" << c.s_star << " best margin(s*+rho, rho<="
        << a.rho_max << ")=" << c.best_offset_margin(a.rho_max) << "\n";
  }
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse coding stability toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a predictive or reconstructive model");
  add_data_options(train_cmd, train_args.data);
  train_cmd->add_option("--lambda", train_args.lambda, "l1 penalty");
  train_cmd->add_option("--k", train_args.k, "Number of atoms");
  train_cmd->add_option("--epochs", train_args.epochs, "Passes over the data");
  train_cmd->add_option("--rho0", train_args.rho0, "Initial step size");
  train_cmd->add_option("--r", train_args.r, "Weight-norm radius");
  train_cmd->add_option("--loss", train_args.loss, "logistic, squared or hinge-squared");
  train_cmd->add_option("--mode", train_args.mode, "predictive or reconstructive");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--out-dir", train_args.out_dir, "Output directory");

  CertifyArgs cert_args;
  auto* cert_cmd = app.add_subcommand("certify", "Stability certificate of a model on data");
  add_data_options(cert_cmd, cert_args.data);
  cert_cmd->add_option("--model", cert_args.model, "Dictionary or hypothesis artifact")->required();
  cert_cmd->add_option("--lambda", cert_args.lambda, "l1 penalty (defaults to the model's)");
  cert_cmd->add_option("--s", cert_args.s, "Sparsity level or range a:b");
  cert_cmd->add_option("--seed", cert_args.seed, "Seed for sampled incoherence estimates");
  cert_cmd->add_option("--subset-budget", cert_args.subset_budget, "Exact-enumeration budget");
  cert_cmd->add_option("--format", cert_args.format, "json or csv");
  cert_cmd->add_option("--out-dir", cert_args.out_dir, "Output directory");

  VerifyArgs verify_args;
  auto* verify_cmd = app.add_subcommand("verify", "Randomized check of a stability guarantee");
  verify_cmd->add_option("--theorem", verify_args.options.theorem, "1, 2, lemmas or isometry");
  verify_cmd->add_option("--trials", verify_args.options.trials, "Number of trials");
  verify_cmd->add_option("--seed", verify_args.options.seed, "Random seed");
  verify_cmd->add_option("--epsilon-over-prp", verify_args.options.epsilon_scale,
                         "Perturbation size as a multiple of the permissible radius");
  verify_cmd->add_option("--s", verify_args.options.s, "Target sparsity (0 cycles 1..3)");
  verify_cmd->add_option("--out-dir", verify_args.out_dir, "Output directory");

  BoundArgs bound_args;
  auto* bound_cmd = app.add_subcommand("bound", "Evaluate a generalization bound");
  bound_cmd->add_option("--regime", bound_args.regime, "overcomplete or infinite");
  bound_cmd->add_option("--form", bound_args.form, "adaptive or fixed");
  bound_cmd->add_option("--certificate", bound_args.certificate, "Certificate artifact");
  bound_cmd->add_option("--cert-s", bound_args.cert_s, "Which s to read from the certificate");
  bound_cmd->add_option("--m", bound_args.m, "Sample size");
  bound_cmd->add_option("--d", bound_args.d, "Ambient dimension");
  bound_cmd->add_option("--k", bound_args.k, "Number of atoms");
  bound_cmd->add_option("--s", bound_args.s, "Sparsity level");
  bound_cmd->add_option("--lambda", bound_args.lambda, "l1 penalty");
  bound_cmd->add_option("--mu-s", bound_args.mu_s, "s-incoherence");
  bound_cmd->add_option("--mu-2s", bound_args.mu_2s, "2s-incoherence");
  bound_cmd->add_option("--margin", bound_args.margin, "s-margin");
  bound_cmd->add_option("--r", bound_args.r, "Weight-norm radius");
  bound_cmd->add_option("--loss", bound_args.loss, "Loss used to derive b and L");
  bound_cmd->add_option("--delta", bound_args.delta, "Failure probability");
  bound_cmd->add_option("--format", bound_args.format, "json or csv");
  bound_cmd->add_option("--out-dir", bound_args.out_dir, "Output directory");

  MarginArgs margin_args;
  auto* margin_cmd = app.add_subcommand("margin-study", "s-margin curves of trained models");
  add_data_options(margin_cmd, margin_args.data);
  margin_cmd->add_option("--k", margin_args.ks, "Atom counts (comma separated)")->delimiter(',');
  margin_cmd->add_option("--lambda", margin_args.lambdas, "Penalties (comma separated)")->delimiter(',');
  margin_cmd->add_option("--rho-max", margin_args.rho_max, "Largest offset rho");
  margin_cmd->add_option("--epochs", margin_args.epochs, "Training passes per configuration");
  margin_cmd->add_option("--warm-start", margin_args.warm_start,
                         "Reconstructive alternations before supervised training (0 = none)");
  margin_cmd->add_option("--seed", margin_args.seed, "Random seed");
  margin_cmd->add_option("--out-dir", margin_args.out_dir, "Output directory");

  std::vector<std::string> storage(args.begin(), args.end());
  if (storage.empty()) storage.emplace_back("sparse-stab");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  if (train_cmd->parsed()) return cmd_train(train_args, out);
  if (cert_cmd->parsed()) return cmd_certify(cert_args, out);
  if (verify_cmd->parsed()) return cmd_verify(verify_args, out);
  if (bound_cmd->parsed()) return cmd_bound(bound_args, out);
  if (margin_cmd->parsed()) return cmd_margin_study(margin_args, out);
  err << "error: no command given\n";
  return kUsage;
}

}  // namespace

stability::TrialReport run_verification(const VerifyOptions& o) {
  const auto& th = o.theorem;
  if (th != "1" && th != "2" && th != "lemmas" && th != "isometry") {
    throw UsageError("unknown theorem id '" + th + "' (expected 1, 2, lemmas or isometry)");
  }
  if (o.trials < 1 || o.trials_per_instance < 1) throw UsageError("--trials must be >= 1");
  if (!(o.epsilon_scale > 0.0)) throw UsageError("--epsilon-over-prp must be positive");
  if (o.s < 0) throw UsageError("--s must be >= 0");

  stability::TrialReport total;
  total.seed = o.seed;
  const Rng root(o.seed);
  long done = 0;
  for (std::uint64_t batch = 0; done < o.trials; ++batch) {
    if (batch > static_cast<std::uint64_t>(50 * o.trials)) {
      throw ConvergenceError("could not draw enough synthetic instances");
    }
    Rng rng = root.derive(batch);
    const Index target = o.s > 0 ? o.s : 1 + static_cast<Index>(batch % 3);
    stability::ExperimentOptions ex;
    ex.n_trials = std::min(o.trials_per_instance, o.trials - done);
    ex.epsilon_scale = o.epsilon_scale;
    stability::TrialReport rep;
    if (th == "isometry") {
      const Index s = target;
      const Index k = 2 * s + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(5)));
      const Index d = k + static_cast<Index>(rng.uniform_index(9));
      const double lambda = rng.uniform(0.1, 0.4);
      Matrix sm = rng.normal_matrix(k, k);
      for (Index j = 0; j < k; ++j) sm.col(j).normalize();
      rep = stability::verify_isometry_difference_bound(Dictionary(sm), s, d, lambda, rng, ex);
    } else {
      const auto inst = stability::synthetic_instance(target, rng);
      if (!inst) continue;
      if (th == "1") {
        if (inst->s >= inst->dict.atoms()) continue;
        rep = stability::verify_theorem1(inst->dict, inst->x, inst->lambda, inst->s, 0.5, rng, ex);
      } else if (th == "2") {
        rep = stability::verify_theorem2(inst->dict, inst->x, inst->lambda, inst->s, rng, ex);
      } else {
        const double eps =
            o.epsilon_scale * inst->lambda * std::pow(10.0, rng.uniform(-4.0, -1.0));
        rep = stability::verify_lemmas(inst->dict, inst->x, inst->lambda, eps, rng, ex);
      }
    }
    total.merge(rep);
    done += rep.n_trials;
  }
  total.seed = o.seed;
  return total;
}

double MarginCurve::margin_at_offset(int rho) const {
  const Index s = s_star + rho;
  if (s < 0 || s >= static_cast<Index>(margins.size())) return 0.0;
  return margins[static_cast<std::size_t>(s)];
}

double MarginCurve::best_offset_margin(int rho_max) const {
  double best = 0.0;
  for (int rho = 1; rho <= rho_max; ++rho) best = std::max(best, margin_at_offset(rho));
  return best;
}

MarginStudyResult run_margin_study(const Sample& sample, const MarginStudyOptions& options) {
  MarginStudyResult result;
  result.rho_max = options.rho_max;
  const Rng root(options.seed);
  std::uint64_t config = 0;
  for (Index k : options.ks) {
    for (double lambda : options.lambdas) {
      train::TrainConfig cfg = options.base;
      cfg.k = k;
      cfg.lambda = lambda;
      cfg.seed = root.derive(config++).next_u64();
      Dictionary dict;
      if (!sample.has_labels()) {
        dict = train::train_reconstructive(sample, cfg).dictionary;
      } else {
        std::optional<Dictionary> init;
        if (options.warm_start_epochs > 0) {
          train::TrainConfig warm = cfg;
          warm.epochs = options.warm_start_epochs;
          init = train::train_reconstructive(sample, warm).dictionary;
        }
        dict = train::train_predictive(sample, cfg, init).hypothesis.dictionary;
      }
      const auto codes = lasso::encode_sample(dict, sample, lambda, cfg.lasso);
      MarginCurve curve;
      curve.k = k;
      curve.lambda = lambda;
      for (const auto& c : codes) {
        if (!c.converged) throw ConvergenceError("margin study: encoder did not converge");
        curve.s_star = std::max(curve.s_star, c.code.nnz());
      }
      curve.margins = cert::margin_profile(codes, lambda);
      result.curves.push_back(std::move(curve));
    }
  }
  return result;
}

std::string margin_study_csv(const MarginStudyResult& result) {
  std::string out = "k,lambda,s,margin,s_star,rho\n";
  for (const auto& c : result.curves) {
    for (std::size_t s = 0; s < c.margins.size(); ++s) {
      out += std::to_string(c.k) + ',' + fmt(c.lambda) + ',' + std::to_string(s) + ',' +
             fmt(c.margins[s]) + ',' + std::to_string(c.s_star) + ',' +
             std::to_string(static_cast<long>(s) - static_cast<long>(c.s_star)) + '\n';
    }
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConvergenceError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

int run_cli(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace sparsestab::cli
