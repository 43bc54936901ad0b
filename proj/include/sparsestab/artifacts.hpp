#pragma once

#include "sparsestab/bounds.hpp"
#include "sparsestab/certificates.hpp"
#include "sparsestab/core.hpp"
#include "sparsestab/data_io.hpp"
#include "sparsestab/stability.hpp"
#include "sparsestab/trainer.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace sparsestab::io {

using Json = nlohmann::json;

/// Only version accepted by the loaders.
inline constexpr int kFormatVersion = 1;

/// File is unreadable as an envelope or its payload digest does not match.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

/// Envelope carries a format_version other than kFormatVersion.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Envelope: {"format_version", "kind", "payload", "sha256"} where sha256 is
/// the hex digest of payload.dump().
void write_artifact(const std::string& path, const std::string& kind, const Json& payload);
/// Throws IntegrityError, VersionError, or DataError (wrong kind).
Json read_artifact(const std::string& path, const std::string& expected_kind);

std::string sha256_hex(const std::string& bytes);

/// {"rows", "cols", "data"}: data is base64 of the row-major float64
/// little-endian entries, so round trips are bit-exact.
Json encode_matrix(const Matrix& a);
Matrix decode_matrix(const Json& j);
Json encode_vector(const Vector& v);
Vector decode_vector(const Json& j);

/// Scalars that may be infinite are stored as numbers or "inf"/"-inf".
Json encode_scalar(double v);
double decode_scalar(const Json& j);

struct DictionaryArtifact {
  Dictionary dictionary;
  std::optional<double> lambda_hint;
  Normalization normalization = Normalization::UnitNorm;
};

void save_dictionary(const std::string& path, const DictionaryArtifact& artifact);
DictionaryArtifact load_dictionary(const std::string& path);

struct HypothesisArtifact {
  Hypothesis hypothesis;
  train::TrainConfig config;
  Normalization normalization = Normalization::UnitNorm;
};

void save_hypothesis(const std::string& path, const HypothesisArtifact& artifact);
HypothesisArtifact load_hypothesis(const std::string& path);

Json to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const Json& j);

Json to_json(const cert::StabilityCertificate& c);
cert::StabilityCertificate certificate_from_json(const Json& j);
void save_certificates(const std::string& path, const std::vector<cert::StabilityCertificate>& cs);
std::vector<cert::StabilityCertificate> load_certificates(const std::string& path);

Json to_json(const bounds::BoundReport& r);
bounds::BoundReport bound_report_from_json(const Json& j);
void save_bound_report(const std::string& path, const bounds::BoundReport& report);
bounds::BoundReport load_bound_report(const std::string& path);

/// Summary, per-trial slacks and failure snapshots (matrices in the same
/// base64 encoding).
Json to_json(const stability::TrialReport& report);
/// One row per trial: trial, admissible, reason, epsilon, epsilon_actual and
/// one slack column per check (empty when unchecked).
std::string trial_slack_csv(const stability::TrialReport& report);

/// Per-epoch trace as CSV.
std::string trace_csv(const train::TrainTrace& trace);

}  // namespace sparsestab::io
