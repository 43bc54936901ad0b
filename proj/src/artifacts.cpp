#include "sparsestab/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

namespace sparsestab::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "matrix payloads are stored as native little-endian float64");

std::string base64_encode(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                      static_cast<int>(n));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw IntegrityError("base64 field has invalid length");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
  if (written < 0) throw IntegrityError("base64 field is malformed");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(written) - pad);
  return out;
}

std::vector<double> decode_doubles(const Json& j, std::size_t expected) {
  const auto bytes = base64_decode(j.get<std::string>());
  if (bytes.size() != expected * sizeof(double)) {
    throw IntegrityError("matrix payload holds " + std::to_string(bytes.size()) +
                         " bytes, expected " + std::to_string(expected * sizeof(double)));
  }
  std::vector<double> values(expected);
  if (expected > 0) std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

cert::Estimate estimate_from_string(const std::string& s) {
  if (s == "exact") return cert::Estimate::Exact;
  if (s == "sampled") return cert::Estimate::Sampled;
  throw DataError("unknown estimate mode '" + s + "'");
}

template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw DataError(what + ": malformed payload (" + e.what() + ")");
  }
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw DataError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot rename temporary file onto '" + path + "'");
  }
}

void write_artifact(const std::string& path, const std::string& kind, const Json& payload) {
  Json env;
  env["format_version"] = kFormatVersion;
  env["kind"] = kind;
  env["payload"] = payload;
  env["sha256"] = sha256_hex(payload.dump());
  write_file_atomic(path, env.dump(1) + "\n");
}

Json read_artifact(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open artifact '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  Json env;
  try {
    env = Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw IntegrityError("artifact '" + path + "' failed its integrity check: " + e.what());
  }
  if (!env.is_object() || !env.contains("format_version") || !env.contains("payload") ||
      !env.contains("sha256") || !env.contains("kind")) {
    throw IntegrityError("artifact '" + path + "' is missing envelope fields");
  }
  if (!env["format_version"].is_number_integer() ||
      env["format_version"].get<long>() != kFormatVersion) {
    throw VersionError("artifact '" + path + "' has unsupported format_version " +
                       env["format_version"].dump() + " (supported: " +
                       std::to_string(kFormatVersion) + ")");
  }
  if (!env["sha256"].is_string() || env["sha256"].get<std::string>() != sha256_hex(env["payload"].dump())) {
    throw IntegrityError("artifact '" + path + "' failed its checksum");
  }
  if (env["kind"] != expected_kind) {
    throw DataError("artifact '" + path + "' holds a " + env["kind"].dump() + ", expected \"" +
                    expected_kind + "\"");
  }
  return env["payload"];
}

Json encode_matrix(const Matrix& a) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = a;
  return {{"rows", a.rows()},
          {"cols", a.cols()},
          {"data", base64_encode(reinterpret_cast<const unsigned char*>(rm.data()),
                                 static_cast<std::size_t>(rm.size()) * sizeof(double))}};
}

Matrix decode_matrix(const Json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  if (rows < 0 || cols < 0) throw DataError("matrix has negative shape");
  const auto values = decode_doubles(j.at("data"), static_cast<std::size_t>(rows * cols));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
}

Json encode_vector(const Vector& v) {
  return {{"size", v.size()},
          {"data", base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                                 static_cast<std::size_t>(v.size()) * sizeof(double))}};
}

Vector decode_vector(const Json& j) {
  const auto n = j.at("size").get<Index>();
  if (n < 0) throw DataError("vector has negative size");
  const auto values = decode_doubles(j.at("data"), static_cast<std::size_t>(n));
  return Eigen::Map<const Vector>(values.data(), n);
}

Json encode_scalar(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double decode_scalar(const Json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw DataError("cannot decode scalar '" + s + "'");
}

void save_dictionary(const std::string& path, const DictionaryArtifact& a) {
  Json p;
  p["dictionary"] = encode_matrix(a.dictionary.matrix());
  p["lambda_hint"] = a.lambda_hint ? Json(*a.lambda_hint) : Json(nullptr);
  p["normalization"] = to_string(a.normalization);
  write_artifact(path, "dictionary", p);
}

DictionaryArtifact load_dictionary(const std::string& path) {
  const Json p = read_artifact(path, "dictionary");
  return guarded("dictionary artifact", [&] {
    DictionaryArtifact a;
    try {
      a.dictionary = Dictionary(decode_matrix(p.at("dictionary")));
    } catch (const UsageError& e) {
      throw DataError(std::string("dictionary artifact: ") + e.what());
    }
    if (!p.at("lambda_hint").is_null()) a.lambda_hint = p.at("lambda_hint").get<double>();
    a.normalization = normalization_from_string(p.at("normalization").get<std::string>());
    return a;
  });
}

Json to_json(const train::TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"r", c.r},
          {"loss", train::to_string(c.loss)},
          {"rho0", c.rho0},
          {"t0", c.t0},
          {"epochs", c.epochs},
          {"k", c.k},
          {"seed", c.seed},
          {"update_dictionary", c.update_dictionary},
          {"update_weights", c.update_weights},
          {"lasso_gap_tol", c.lasso.gap_tol},
          {"lasso_max_iters", c.lasso.max_iters},
          {"lasso_zero_threshold", c.lasso.zero_threshold},
          {"lasso_polish", c.lasso.polish},
          {"trace_subset_budget", c.trace_subset_budget}};
}

train::TrainConfig train_config_from_json(const Json& j) {
  return guarded("train config", [&] {
    train::TrainConfig c;
    c.lambda = j.at("lambda").get<double>();
    c.r = j.at("r").get<double>();
    c.loss = train::loss_from_string(j.at("loss").get<std::string>());
    c.rho0 = j.at("rho0").get<double>();
    c.t0 = j.at("t0").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.k = j.at("k").get<Index>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.update_dictionary = j.at("update_dictionary").get<bool>();
    c.update_weights = j.at("update_weights").get<bool>();
    c.lasso.gap_tol = j.at("lasso_gap_tol").get<double>();
    c.lasso.max_iters = j.at("lasso_max_iters").get<long>();
    c.lasso.zero_threshold = j.at("lasso_zero_threshold").get<double>();
    c.lasso.polish = j.at("lasso_polish").get<bool>();
    c.trace_subset_budget = j.at("trace_subset_budget").get<std::uint64_t>();
    return c;
  });
}

void save_hypothesis(const std::string& path, const HypothesisArtifact& a) {
  Json p;
  p["dictionary"] = encode_matrix(a.hypothesis.dictionary.matrix());
  p["w"] = encode_vector(a.hypothesis.w);
  p["r"] = a.hypothesis.r;
  p["config"] = to_json(a.config);
  p["normalization"] = to_string(a.normalization);
  write_artifact(path, "hypothesis", p);
}

HypothesisArtifact load_hypothesis(const std::string& path) {
  const Json p = read_artifact(path, "hypothesis");
  return guarded("hypothesis artifact", [&] {
    HypothesisArtifact a;
    try {
      a.hypothesis = Hypothesis(Dictionary(decode_matrix(p.at("dictionary"))),
                                decode_vector(p.at("w")), p.at("r").get<double>());
    } catch (const UsageError& e) {
      throw DataError(std::string("hypothesis artifact: ") + e.what());
    }
    a.config = train_config_from_json(p.at("config"));
    a.normalization = normalization_from_string(p.at("normalization").get<std::string>());
    return a;
  });
}

Json to_json(const cert::StabilityCertificate& c) {
  return {{"d", c.d},
          {"k", c.k},
          {"s", c.s},
          {"lambda", c.lambda},
          {"m", c.m},
          {"max_support", c.max_support},
          {"mu_s", c.mu_s},
          {"mu_s_mode", cert::to_string(c.mu_s_mode)},
          {"mu_2s", c.mu_2s ? Json(*c.mu_2s) : Json(nullptr)},
          {"mu_2s_mode", cert::to_string(c.mu_2s_mode)},
          {"margin_s", c.margin_s},
          {"min_active_magnitude", encode_scalar(c.min_active_magnitude)},
          {"prp_thm1", c.prp_thm1},
          {"tau_thm2", encode_scalar(c.tau_thm2)},
          {"prp_thm2", encode_scalar(c.prp_thm2)},
          {"sample_hash", c.sample_hash}};
}

cert::StabilityCertificate certificate_from_json(const Json& j) {
  return guarded("certificate", [&] {
    cert::StabilityCertificate c;
    c.d = j.at("d").get<Index>();
    c.k = j.at("k").get<Index>();
    c.s = j.at("s").get<Index>();
    c.lambda = j.at("lambda").get<double>();
    c.m = j.at("m").get<Index>();
    c.max_support = j.at("max_support").get<Index>();
    c.mu_s = j.at("mu_s").get<double>();
    c.mu_s_mode = estimate_from_string(j.at("mu_s_mode").get<std::string>());
    if (!j.at("mu_2s").is_null()) c.mu_2s = j.at("mu_2s").get<double>();
    c.mu_2s_mode = estimate_from_string(j.at("mu_2s_mode").get<std::string>());
    c.margin_s = j.at("margin_s").get<double>();
    c.min_active_magnitude = decode_scalar(j.at("min_active_magnitude"));
    c.prp_thm1 = j.at("prp_thm1").get<double>();
    c.tau_thm2 = decode_scalar(j.at("tau_thm2"));
    c.prp_thm2 = decode_scalar(j.at("prp_thm2"));
    c.sample_hash = j.at("sample_hash").get<std::string>();
    return c;
  });
}

void save_certificates(const std::string& path, const std::vector<cert::StabilityCertificate>& cs) {
  Json arr = Json::array();
  for (const auto& c : cs) arr.push_back(to_json(c));
  write_artifact(path, "stability_certificate", Json{{"certificates", arr}});
}

std::vector<cert::StabilityCertificate> load_certificates(const std::string& path) {
  const Json p = read_artifact(path, "stability_certificate");
  return guarded("certificate artifact", [&] {
    std::vector<cert::StabilityCertificate> out;
    for (const auto& j : p.at("certificates")) out.push_back(certificate_from_json(j));
    return out;
  });
}

Json to_json(const bounds::BoundReport& r) {
  const auto& in = r.inputs;
  Json inputs = {{"m", in.m},           {"d", in.d},         {"k", in.k},
                 {"s", in.s},           {"lambda", in.lambda}, {"r", in.r},
                 {"b", in.b},           {"L", in.L},         {"delta", in.delta},
                 {"mu_s", in.mu_s},     {"mu_2s", in.mu_2s}, {"margin_s", in.margin_s}};
  Json terms = Json::array();
  for (const auto& t : r.terms) terms.push_back({{"name", t.name}, {"value", encode_scalar(t.value)}});
  return {{"regime", bounds::to_string(r.regime)},
          {"form", bounds::to_string(r.form)},
          {"inputs", inputs},
          {"terms", terms},
          {"total", encode_scalar(r.total)},
          {"m_min", encode_scalar(r.m_min)},
          {"applicable", r.applicable},
          {"reason", r.reason},
          {"warnings", r.warnings},
          {"alpha", r.alpha ? Json(*r.alpha) : Json(nullptr)}};
}

bounds::BoundReport bound_report_from_json(const Json& j) {
  return guarded("bound report", [&] {
    bounds::BoundReport r;
    r.regime = bounds::regime_from_string(j.at("regime").get<std::string>());
    const auto form = j.at("form").get<std::string>();
    if (form != "adaptive" && form != "fixed") throw DataError("unknown bound form '" + form + "'");
    r.form = form == "adaptive" ? bounds::Form::Adaptive : bounds::Form::Fixed;
    const auto& in = j.at("inputs");
    r.inputs.m = in.at("m").get<double>();
    r.inputs.d = in.at("d").get<double>();
    r.inputs.k = in.at("k").get<double>();
    r.inputs.s = in.at("s").get<double>();
    r.inputs.lambda = in.at("lambda").get<double>();
    r.inputs.r = in.at("r").get<double>();
    r.inputs.b = in.at("b").get<double>();
    r.inputs.L = in.at("L").get<double>();
    r.inputs.delta = in.at("delta").get<double>();
    r.inputs.mu_s = in.at("mu_s").get<double>();
    r.inputs.mu_2s = in.at("mu_2s").get<double>();
    r.inputs.margin_s = in.at("margin_s").get<double>();
    for (const auto& t : j.at("terms")) {
      r.terms.push_back({t.at("name").get<std::string>(), decode_scalar(t.at("value"))});
    }
    r.total = decode_scalar(j.at("total"));
    r.m_min = decode_scalar(j.at("m_min"));
    r.applicable = j.at("applicable").get<bool>();
    r.reason = j.at("reason").get<std::string>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (!j.at("alpha").is_null()) r.alpha = j.at("alpha").get<double>();
    return r;
  });
}

void save_bound_report(const std::string& path, const bounds::BoundReport& report) {
  write_artifact(path, "bound_report", to_json(report));
}

bounds::BoundReport load_bound_report(const std::string& path) {
  return bound_report_from_json(read_artifact(path, "bound_report"));
}

Json to_json(const stability::TrialReport& report) {
  Json checks = Json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"n_admissible", c.n_admissible},
                      {"n_pass", c.n_pass},
                      {"worst_slack", c.n_admissible > 0 ? encode_scalar(c.worst_slack) : Json(nullptr)}});
  }
  Json trials = Json::array();
  for (const auto& t : report.trials) {
    Json slack = Json::array();
    for (const auto& s : t.slack) slack.push_back(s ? encode_scalar(*s) : Json(nullptr));
    trials.push_back({{"trial", t.trial},
                      {"admissible", t.admissible},
                      {"reason", t.reason},
                      {"epsilon", encode_scalar(t.epsilon)},
                      {"epsilon_actual", encode_scalar(t.epsilon_actual)},
                      {"slack", slack}});
  }
  Json failures = Json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"inequality", f.inequality},
                        {"trial", f.trial},
                        {"dict", encode_matrix(f.dict)},
                        {"dict_tilde", encode_matrix(f.dict_tilde)},
                        {"x", encode_vector(f.x)},
                        {"lambda", f.lambda},
                        {"epsilon", f.epsilon},
                        {"slack", encode_scalar(f.slack)}});
  }
  return {{"experiment", report.experiment},
          {"seed", report.seed},
          {"n_trials", report.n_trials},
          {"n_admissible", report.n_admissible},
          {"checks", checks},
          {"inadmissible_reasons", report.inadmissible_reasons},
          {"total_failures", report.total_failures()},
          {"trials", trials},
          {"failures", failures}};
}

std::string trial_slack_csv(const stability::TrialReport& report) {
  std::string out = "trial,admissible,reason,epsilon,epsilon_actual";
  for (const auto& c : report.checks) out += ",slack_" + c.name;
  out += '\n';
  for (const auto& t : report.trials) {
    std::string reason = t.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    out += std::to_string(t.trial) + ',' + (t.admissible ? "1" : "0") + ',' + reason + ',' +
           format_double(t.epsilon) + ',' + format_double(t.epsilon_actual);
    for (const auto& s : t.slack) {
      out += ',';
      if (s) out += format_double(*s);
    }
    out += '\n';
  }
  return out;
}

std::string trace_csv(const train::TrainTrace& trace) {
  std::string out =
      "epoch,objective,training_error,max_support,margin,mu_s,mu_mode,skipped_points,"
      "skipped_dictionary_steps\n";
  for (const auto& e : trace.epochs) {
    out += std::to_string(e.epoch) + ',' + format_double(e.objective) + ',' +
           format_double(e.training_error) + ',' + std::to_string(e.max_support) + ',' +
           format_double(e.margin) + ',' + format_double(e.mu_s) + ',' +
           cert::to_string(e.mu_mode) + ',' + std::to_string(e.skipped_points) + ',' +
           std::to_string(e.skipped_dictionary_steps) + '\n';
  }
  return out;
}

}  // namespace sparsestab::io
