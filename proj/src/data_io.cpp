#include "sparsestab/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace sparsestab::io {
namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw DataError("IDX file '" + path + "': truncated header at offset " +
                    std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(const std::vector<std::uint8_t>& bytes, std::uint32_t magic,
                  const std::string& path) {
  const std::uint32_t got = read_be32(bytes, 0, path);
  if (got != magic) {
    std::ostringstream msg;
    msg << "IDX file '" << path << "': bad magic number 0x" << std::hex << got
        << " at offset 0 (expected 0x" << magic << ")";
    throw DataError(msg.str());
  }
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view field, std::size_t line_no, const std::string& path) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw DataError("CSV '" + path + "' line " + std::to_string(line_no) +
                    ": cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

const char* to_string(Normalization n) {
  return n == Normalization::UnitNorm ? "unit-norm" : "unit-ball";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "unit-norm") return Normalization::UnitNorm;
  if (name == "unit-ball") return Normalization::UnitBall;
  throw UsageError("unknown normalization '" + name + "' (expected unit-norm or unit-ball)");
}

Sample normalize(const RawTable& table, Normalization normalization) {
  Matrix pts = table.points;
  for (Index i = 0; i < pts.cols(); ++i) {
    if (!pts.col(i).allFinite()) {
      throw DataError("point " + std::to_string(i) + " has a non-finite entry");
    }
    const double n = pts.col(i).norm();
    if (n == 0.0) continue;
    if (normalization == Normalization::UnitNorm || n > 1.0) pts.col(i) /= n;
  }
  return Sample(std::move(pts), table.labelled ? table.labels : std::vector<double>{});
}

LabelMap LabelMap::one_vs_all(double positive_label) {
  LabelMap map;
  map.kind = Kind::OneVsAll;
  map.positive = positive_label;
  return map;
}

double LabelMap::apply(double raw) const {
  switch (kind) {
    case Kind::Identity:
      return raw;
    case Kind::OneVsAll:
      return raw == positive ? 1.0 : -1.0;
    case Kind::Explicit: {
      const auto it = table.find(raw);
      if (it == table.end()) {
        std::ostringstream msg;
        msg << "label " << raw << " outside map";
        throw DataError(msg.str());
      }
      return it->second;
    }
  }
  return raw;
}

RawTable generate_planted(const SyntheticSpec& spec, PlantedModel* truth) {
  if (spec.d < 1 || spec.k < 1 || spec.m < 1) {
    throw UsageError("synthetic spec: d, k and m must be >= 1");
  }
  if (spec.s_star < 1 || spec.s_star > spec.k) {
    throw UsageError("synthetic spec: s_star must satisfy 1 <= s_star <= k");
  }
  if (spec.noise < 0.0 || !(spec.coef_min > 0.0) || spec.coef_max < spec.coef_min) {
    throw UsageError("synthetic spec: need noise >= 0 and 0 < coef_min <= coef_max");
  }
  Rng rng(spec.seed);
  // Orthonormal atoms when they fit, so the planted supports are exactly
  // recoverable by the encoder; unit Gaussian atoms otherwise.
  Matrix atoms;
  if (spec.k <= spec.d) {
    atoms = random_isometry(spec.d, spec.k, rng);
  } else {
    atoms = rng.normal_matrix(spec.d, spec.k);
    for (Index j = 0; j < spec.k; ++j) atoms.col(j).normalize();
  }
  const Vector w_star = rng.normal_vector(spec.k);

  std::vector<Index> order(static_cast<std::size_t>(spec.k));
  Matrix codes = Matrix::Zero(spec.k, spec.m);
  RawTable table;
  table.points.resize(spec.d, spec.m);
  table.labels.resize(static_cast<std::size_t>(spec.m));
  table.labelled = true;
  for (Index i = 0; i < spec.m; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order);
    for (Index t = 0; t < spec.s_star; ++t) {
      const double magnitude = rng.uniform(spec.coef_min, spec.coef_max);
      codes(order[static_cast<std::size_t>(t)], i) = rng.uniform() < 0.5 ? -magnitude : magnitude;
    }
    table.points.col(i) = atoms * codes.col(i) + spec.noise * rng.normal_vector(spec.d);
    table.labels[static_cast<std::size_t>(i)] = w_star.dot(codes.col(i)) >= 0.0 ? 1.0 : -1.0;
  }
  if (truth != nullptr) {
    truth->dictionary = Dictionary(atoms);
    truth->w = w_star;
    truth->codes = codes;
  }
  return table;
}

RawTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw DataError("CSV '" + path + "' is empty");
  header = split_fields(header_line);
  RawTable table;
  table.labelled = trim(header.front()) == "y";
  const std::size_t width = header.size();
  const std::size_t dim = width - (table.labelled ? 1 : 0);
  if (dim == 0) throw DataError("CSV '" + path + "' line " + std::to_string(line_no) +
                                ": header names no coordinates");

  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width) {
      throw DataError("CSV '" + path + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    std::size_t f = 0;
    if (table.labelled) table.labels.push_back(parse_double(fields[f++], line_no, path));
    for (; f < width; ++f) values.push_back(parse_double(fields[f], line_no, path));
    ++rows;
  }
  if (rows == 0) throw DataError("CSV '" + path + "' has a header but no rows");
  table.points = Eigen::Map<const Matrix>(values.data(), static_cast<Index>(dim), rows);
  return table;
}

void write_csv(const std::string& path, const Sample& sample) {
  std::string out;
  if (sample.has_labels()) out += "y,";
  for (Index j = 0; j < sample.dim(); ++j) {
    if (j > 0) out += ',';
    out += "x" + std::to_string(j + 1);
  }
  out += '\n';
  for (Index i = 0; i < sample.size(); ++i) {
    if (sample.has_labels()) {
      append_double(out, sample.y(i));
      out += ',';
    }
    for (Index j = 0; j < sample.dim(); ++j) {
      if (j > 0) out += ',';
      append_double(out, sample.points()(j, i));
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write '" + path + "'");
  file << out;
  if (!file) throw DataError("write to '" + path + "' failed");
}

IdxImages read_idx_images(const std::string& path) {
  const auto bytes = read_bytes(path);
  expect_magic(bytes, 0x00000803u, path);
  IdxImages img;
  img.count = read_be32(bytes, 4, path);
  img.rows = read_be32(bytes, 8, path);
  img.cols = read_be32(bytes, 12, path);
  const std::size_t need = static_cast<std::size_t>(img.count * img.rows * img.cols);
  if (bytes.size() - 16 < need) {
    throw DataError("IDX file '" + path + "': pixel data ends at offset " +
                    std::to_string(bytes.size()) + ", expected " + std::to_string(16 + need));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = read_bytes(path);
  expect_magic(bytes, 0x00000801u, path);
  const std::size_t count = read_be32(bytes, 4, path);
  if (bytes.size() - 8 < count) {
    throw DataError("IDX file '" + path + "': label data ends at offset " +
                    std::to_string(bytes.size()) + ", expected " + std::to_string(8 + count));
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

Sample load_dataset(const DatasetSpec& spec) {
  RawTable table;
  switch (spec.source) {
    case DatasetSpec::Source::Csv:
      table = read_csv(spec.csv_path);
      break;
    case DatasetSpec::Source::Synthetic:
      table = generate_planted(spec.synthetic);
      break;
    case DatasetSpec::Source::Idx: {
      const auto images = read_idx_images(spec.idx_images);
      const auto labels = read_idx_labels(spec.idx_labels);
      if (static_cast<Index>(labels.size()) != images.count) {
        throw DataError("IDX image count " + std::to_string(images.count) +
                        " differs from label count " + std::to_string(labels.size()));
      }
      const Index dim = images.rows * images.cols;
      table.points.resize(dim, images.count);
      for (Index i = 0; i < images.count; ++i) {
        for (Index p = 0; p < dim; ++p) {
          table.points(p, i) = images.pixels[static_cast<std::size_t>(i * dim + p)] / 255.0;
        }
      }
      table.labels.assign(labels.begin(), labels.end());
      table.labelled = true;
      break;
    }
  }
  if (table.labelled) {
    for (double& y : table.labels) y = spec.labels.apply(y);
  }
  if (spec.subset_size) {
    const Index n = *spec.subset_size;
    const Index total = table.points.cols();
    if (n < 1 || n > total) {
      throw DataError("subset size " + std::to_string(n) + " outside [1, " +
                      std::to_string(total) + "]");
    }
    std::vector<Index> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), Index{0});
    Rng rng(spec.subset_seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(n));
    std::sort(idx.begin(), idx.end());
    RawTable sub;
    sub.points.resize(table.points.rows(), n);
    sub.labelled = table.labelled;
    for (Index c = 0; c < n; ++c) {
      sub.points.col(c) = table.points.col(idx[static_cast<std::size_t>(c)]);
      if (table.labelled) sub.labels.push_back(table.labels[static_cast<std::size_t>(idx[c])]);
    }
    table = std::move(sub);
  }
  return normalize(table, spec.normalization);
}

}  // namespace sparsestab::io
