#pragma once

#include "sparsestab/core.hpp"
#include "sparsestab/stability.hpp"
#include "sparsestab/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sparsestab::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNonConvergence = 4 };

/// Runs one command line (args[0] is the program name). All output goes to
/// the given streams; the return value is the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

/// Batched perturbation experiments over fresh synthetic instances.
struct VerifyOptions {
  /// "1" (margin-based stability), "2" (support-preserving stability),
  /// "lemmas" or "isometry". Anything else is a UsageError.
  std::string theorem = "1";
  long trials = 1000;
  std::uint64_t seed = 0;
  double epsilon_scale = 1.0;
  /// Target sparsity; 0 cycles through 1, 2, 3 across instances.
  Index s = 0;
  long trials_per_instance = 10;
};

/// Runs `trials` trials in batches of `trials_per_instance`, each batch on
/// an instance drawn from Rng(seed).derive(batch). Deterministic in options.
stability::TrialReport run_verification(const VerifyOptions& options);

struct MarginStudyOptions {
  std::vector<Index> ks{8, 16};
  std::vector<double> lambdas{0.1, 0.2, 0.3};
  int rho_max = 3;
  /// Reconstructive alternations used to initialize the predictive model
  /// (the usual warm start for supervised dictionary learning); 0 starts
  /// from random atoms.
  int warm_start_epochs = 30;
  /// Template for every configuration; k, lambda and seed are overwritten.
  train::TrainConfig base{};
  std::uint64_t seed = 0;
};

/// Sample margin for every s in [0, k) of one trained configuration, and the
/// largest support size s* observed on the sample.
struct MarginCurve {
  Index k = 0;
  double lambda = 0.0;
  Index s_star = 0;
  std::vector<double> margins;

  /// margin at s* + rho, or 0 once s* + rho reaches k.
  double margin_at_offset(int rho) const;
  /// Largest margin over rho in [1, rho_max].
  double best_offset_margin(int rho_max) const;
};

struct MarginStudyResult {
  std::vector<MarginCurve> curves;
  int rho_max = 3;
};

/// Trains one dictionary per (k, lambda) pair (predictive when the sample is
/// labelled, reconstructive otherwise) and records its margin curve.
MarginStudyResult run_margin_study(const Sample& sample, const MarginStudyOptions& options);

/// Columns: k, lambda, s, margin, s_star, rho (= s - s_star).
std::string margin_study_csv(const MarginStudyResult& result);

}  // namespace sparsestab::cli
