#pragma once

#include "sparsestab/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sparsestab::io {

/// UnitNorm rescales every nonzero point to norm 1; UnitBall divides by
/// max(1, ||x||) and leaves points already inside the ball untouched.
enum class Normalization { UnitNorm, UnitBall };

const char* to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

/// Raw points and labels before the unit-ball invariant is imposed.
struct RawTable {
  Matrix points;  // one point per column
  std::vector<double> labels;
  bool labelled = false;
};

/// Applies the normalization to every column. Zero points stay at zero.
/// Throws DataError on non-finite entries.
Sample normalize(const RawTable& table, Normalization normalization);

/// Maps raw labels to training labels. OneVsAll sends `positive` to +1 and
/// every other label to -1; Explicit rejects labels missing from the table.
struct LabelMap {
  enum class Kind { Identity, OneVsAll, Explicit };
  Kind kind = Kind::Identity;
  double positive = 0.0;
  std::map<double, double> table;

  static LabelMap one_vs_all(double positive_label);
  /// Throws DataError for labels outside an explicit table.
  double apply(double raw) const;
};

/// Planted sparse model: k orthonormal atoms in R^d (unit-norm Gaussian
/// atoms when k > d), codes with
/// `s_star` nonzeros of magnitude in [coef_min, coef_max] and random signs,
/// additive Gaussian noise, labels sign(<w*, z>) for a Gaussian w*.
struct SyntheticSpec {
  Index d = 16;
  Index k = 8;
  Index m = 200;
  Index s_star = 3;
  double noise = 0.01;
  double coef_min = 0.2;
  double coef_max = 1.0;
  std::uint64_t seed = 7;
};

struct PlantedModel {
  Dictionary dictionary;
  Vector w;
  Matrix codes;  // k x m
};

/// Planted points before normalization. `truth` receives the generating
/// dictionary, weights and codes when non-null.
RawTable generate_planted(const SyntheticSpec& spec, PlantedModel* truth = nullptr);

struct DatasetSpec {
  enum class Source { Csv, Idx, Synthetic };
  Source source = Source::Synthetic;
  std::string csv_path;
  std::string idx_images;
  std::string idx_labels;
  SyntheticSpec synthetic{};
  Normalization normalization = Normalization::UnitNorm;
  LabelMap labels{};
  /// Deterministic subset of this many points drawn with subset_seed.
  std::optional<Index> subset_size;
  std::uint64_t subset_seed = 0;
};

/// Loads, maps labels, subsets, then normalizes. Throws DataError on any
/// malformed input.
Sample load_dataset(const DatasetSpec& spec);

/// CSV with header `y,x1,...,xd` (labelled) or `x1,...,xd`. Errors name the
/// line number.
RawTable read_csv(const std::string& path);
void write_csv(const std::string& path, const Sample& sample);

struct IdxImages {
  Index count = 0;
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

/// Big-endian IDX files: magic 0x00000803 for unsigned-byte image stacks and
/// 0x00000801 for label vectors. Errors name the byte offset.
IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);

}  // namespace sparsestab::io
