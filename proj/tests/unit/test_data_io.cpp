#include "generators.hpp"

#include "sparsestab/artifacts.hpp"
#include "sparsestab/data_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

using namespace sparsestab;
using namespace sparsestab::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("sparsestab_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string idx_images_bytes(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                             const std::vector<std::uint8_t>& pixels) {
  std::string out;
  put_be32(out, magic);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  out.append(pixels.begin(), pixels.end());
  return out;
}

std::string idx_labels_bytes(std::uint32_t magic, const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("synthetic loads are byte-identical across runs") {
  DatasetSpec spec;
  spec.synthetic.seed = 7;
  spec.synthetic.m = 200;
  spec.labels = LabelMap{};
  const Sample a = load_dataset(spec), b = load_dataset(spec);
  CHECK(a.size() == 200);
  CHECK(bit_equal(a.points(), b.points()));
  CHECK(a.labels() == b.labels());
  CHECK(sample_fingerprint(a) == sample_fingerprint(b));
  for (Index i = 0; i < a.size(); ++i) CHECK(a.x(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
  spec.synthetic.seed = 8;
  CHECK(sample_fingerprint(load_dataset(spec)) != sample_fingerprint(a));
}

TEST_CASE("planted generator follows its specification") {
  PlantedModel truth;
  const SyntheticSpec spec{.d = 10, .k = 6, .m = 50, .s_star = 3, .noise = 0.0, .seed = 3};
  const auto raw = generate_planted(spec, &truth);
  CHECK(raw.labelled);
  CHECK((truth.dictionary.matrix().transpose() * truth.dictionary.matrix() - Matrix::Identity(6, 6)).norm() < 1e-12);
  for (Index i = 0; i < 50; ++i) {
    Index nnz = 0;
    for (Index j = 0; j < 6; ++j) {
      const double c = std::abs(truth.codes(j, i));
      if (c != 0.0) {
        ++nnz;
        CHECK(c >= 0.2);
        CHECK(c <= 1.0);
      }
    }
    CHECK(nnz == 3);
    CHECK((raw.points.col(i) - truth.dictionary.matrix() * truth.codes.col(i)).norm() < 1e-14);
    const double score = truth.w.dot(truth.codes.col(i));
    CHECK(raw.labels[static_cast<std::size_t>(i)] == (score >= 0.0 ? 1.0 : -1.0));
  }
}

TEST_CASE("normalization modes") {
  RawTable t;
  t.points = Matrix::Zero(2, 3);
  t.points(0, 0) = 3.0;
  t.points(1, 1) = 0.5;
  const Sample ball = normalize(t, Normalization::UnitBall);
  CHECK(ball.x(0).norm() == 1.0);
  CHECK(ball.x(1)(1) == 0.5);
  CHECK(ball.x(2).norm() == 0.0);
  const Sample unit = normalize(t, Normalization::UnitNorm);
  CHECK(unit.x(1).norm() == 1.0);
  CHECK(unit.x(2).norm() == 0.0);
  t.points(0, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(normalize(t, Normalization::UnitBall), DataError);
  CHECK(normalization_from_string(to_string(Normalization::UnitBall)) == Normalization::UnitBall);
}

TEST_CASE("CSV reading, normalization and errors") {
  TempDir dir;
  const auto path = dir.file("data.csv");
  write_text(path, "y,x1,x2\n1,0,3\n-1,0.1,0.2\n");
  DatasetSpec spec;
  spec.source = DatasetSpec::Source::Csv;
  spec.csv_path = path;
  spec.normalization = Normalization::UnitBall;
  const Sample s = load_dataset(spec);
  REQUIRE(s.size() == 2);
  CHECK(s.x(0).norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.x(0)(1) == 1.0);
  CHECK(s.x(1)(0) == 0.1);
  CHECK(s.labels() == std::vector<double>{1.0, -1.0});

  write_text(path, "y,x1,x2\n1,0,3\n-1,0.1\n");
  try {
    read_csv(path);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  write_text(path, "x1,x2\n0.1,abc\n");
  CHECK_THROWS_AS(read_csv(path), DataError);
  write_text(path, "x1,x2\n0.1,0.2\n");
  CHECK_FALSE(read_csv(path).labelled);
  CHECK_THROWS_AS(read_csv(dir.file("missing.csv")), DataError);

  // write_csv round trips exactly through shortest-representation printing.
  Rng rng(1);
  Matrix pts(3, 5);
  for (Index i = 0; i < 5; ++i) pts.col(i) = gen::ball_point(3, rng);
  const Sample orig(pts, {1, -1, 1, 1, -1});
  write_csv(path, orig);
  const auto back = read_csv(path);
  CHECK(bit_equal(back.points, pts));
  CHECK(back.labels == orig.labels());
}

TEST_CASE("label maps") {
  TempDir dir;
  const auto path = dir.file("labels.csv");
  write_text(path, "y,x1\n4,0.5\n7,0.2\n4,0.1\n");
  DatasetSpec spec;
  spec.source = DatasetSpec::Source::Csv;
  spec.csv_path = path;
  spec.labels = LabelMap::one_vs_all(4.0);
  CHECK(load_dataset(spec).labels() == std::vector<double>{1.0, -1.0, 1.0});

  spec.labels = LabelMap{};
  spec.labels.kind = LabelMap::Kind::Explicit;
  spec.labels.table = {{4.0, 1.0}};
  try {
    load_dataset(spec);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("outside map") != std::string::npos);
  }
}

TEST_CASE("deterministic subsets") {
  DatasetSpec spec;
  spec.synthetic.m = 100;
  spec.subset_size = 30;
  spec.subset_seed = 4;
  const Sample a = load_dataset(spec), b = load_dataset(spec);
  CHECK(a.size() == 30);
  CHECK(bit_equal(a.points(), b.points()));
  spec.subset_seed = 5;
  CHECK_FALSE(bit_equal(load_dataset(spec).points(), a.points()));
  spec.subset_size = 0;
  CHECK_THROWS_AS(load_dataset(spec), DataError);
}

TEST_CASE("IDX parsing and corruption") {
  TempDir dir;
  const auto img = dir.file("images.idx"), lab = dir.file("labels.idx");
  std::vector<std::uint8_t> pixels(3 * 2 * 2);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 20);
  write_text(img, idx_images_bytes(0x803, 3, 2, 2, pixels));
  write_text(lab, idx_labels_bytes(0x801, {4, 1, 4}));
  const auto images = read_idx_images(img);
  CHECK(images.count == 3);
  CHECK(images.rows == 2);
  CHECK(images.pixels == pixels);
  CHECK(read_idx_labels(lab) == std::vector<std::uint8_t>{4, 1, 4});

  DatasetSpec spec;
  spec.source = DatasetSpec::Source::Idx;
  spec.idx_images = img;
  spec.idx_labels = lab;
  spec.labels = LabelMap::one_vs_all(4.0);
  const Sample s = load_dataset(spec);
  CHECK(s.size() == 3);
  CHECK(s.dim() == 4);
  CHECK(s.labels() == std::vector<double>{1.0, -1.0, 1.0});
  for (Index i = 1; i < 3; ++i) CHECK(s.x(i).norm() == doctest::Approx(1.0).epsilon(1e-15));

  write_text(img, idx_images_bytes(0x804, 3, 2, 2, pixels));
  try {
    read_idx_images(img);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
  }
  write_text(img, idx_images_bytes(0x803, 3, 2, 2, std::vector<std::uint8_t>(5)));
  CHECK_THROWS_AS(read_idx_images(img), DataError);
  write_text(lab, idx_labels_bytes(0x803, {1}));
  CHECK_THROWS_AS(read_idx_labels(lab), DataError);
  write_text(img, idx_images_bytes(0x803, 3, 2, 2, pixels));
  write_text(lab, idx_labels_bytes(0x801, {1, 2}));
  CHECK_THROWS_AS(load_dataset(spec), DataError);
}

TEST_CASE("dictionary and hypothesis artifacts round trip bit-exactly") {
  TempDir dir;
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto dict = gen::ball_dictionary(gen::int_in(rng, 1, 12), gen::int_in(rng, 1, 12), rng);
    const auto path = dir.file("nested/dict.json");
    save_dictionary(path, {dict, trial % 2 ? std::optional<double>(0.1) : std::nullopt, Normalization::UnitBall});
    const auto back = load_dictionary(path);
    CHECK(bit_equal(back.dictionary.matrix(), dict.matrix()));
    CHECK(back.lambda_hint.has_value() == (trial % 2 == 1));
    CHECK(back.normalization == Normalization::UnitBall);
  }
  train::TrainConfig cfg;
  cfg.lambda = 0.137;
  cfg.k = 5;
  cfg.loss = train::LossKind::HingeSquared;
  cfg.seed = 99;
  const auto dict = gen::unit_dictionary(4, 5, rng);
  const Vector w = 0.9 * random_on_sphere(5, rng);
  const auto path = dir.file("model.json");
  save_hypothesis(path, {Hypothesis(dict, w, 1.0), cfg, Normalization::UnitNorm});
  const auto h = load_hypothesis(path);
  CHECK(bit_equal(h.hypothesis.dictionary.matrix(), dict.matrix()));
  CHECK(bit_equal(h.hypothesis.w, w));
  CHECK(h.config.lambda == cfg.lambda);
  CHECK(h.config.loss == cfg.loss);
  CHECK(h.config.seed == 99);
  CHECK_THROWS_AS(load_dictionary(path), DataError);
}

TEST_CASE("certificate and bound report artifacts round trip") {
  TempDir dir;
  Rng rng(3);
  const auto dict = gen::unit_dictionary(6, 8, rng);
  Matrix pts(6, 10);
  for (Index i = 0; i < 10; ++i) pts.col(i) = gen::sparse_point(dict, 2, 0.01, rng);
  std::vector<cert::StabilityCertificate> cs;
  for (Index s = 1; s <= 5; ++s) cs.push_back(cert::certify(dict, Sample(pts), 0.1, s, rng));
  save_certificates(dir.file("c.json"), cs);
  const auto back = load_certificates(dir.file("c.json"));
  REQUIRE(back.size() == cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    CHECK(back[i].s == cs[i].s);
    CHECK(back[i].mu_s == cs[i].mu_s);
    CHECK(back[i].mu_2s == cs[i].mu_2s);
    CHECK(back[i].margin_s == cs[i].margin_s);
    CHECK(back[i].min_active_magnitude == cs[i].min_active_magnitude);
    CHECK(back[i].prp_thm2 == cs[i].prp_thm2);
    CHECK(back[i].sample_hash == cs[i].sample_hash);
  }

  bounds::BoundInputs in{1e7, 16, 32, 3, 0.1, 1, 1, 1, 0.05, 0.5, 0.3, 0.05};
  const auto rep = bounds::eval_theorem4(in);
  save_bound_report(dir.file("b.json"), rep);
  const auto rb = load_bound_report(dir.file("b.json"));
  CHECK(rb.total == rep.total);
  CHECK(rb.alpha == rep.alpha);
  CHECK(rb.applicable == rep.applicable);
  REQUIRE(rb.terms.size() == rep.terms.size());
  for (std::size_t i = 0; i < rep.terms.size(); ++i) CHECK(rb.terms[i].value == rep.terms[i].value);
}

TEST_CASE("corrupted artifacts are rejected") {
  TempDir dir;
  const auto path = dir.file("dict.json");
  save_dictionary(path, {Dictionary::identity(3), std::nullopt, Normalization::UnitNorm});
  const std::string good = read_text(path);

  write_text(path, good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(load_dictionary(path), IntegrityError);

  auto j = Json::parse(good);
  j["payload"]["dictionary"]["rows"] = 4;
  write_text(path, j.dump());
  CHECK_THROWS_AS(load_dictionary(path), IntegrityError);

  j = Json::parse(good);
  j["format_version"] = 0;
  write_text(path, j.dump());
  CHECK_THROWS_AS(load_dictionary(path), VersionError);

  j = Json::parse(good);
  j["kind"] = "hypothesis";
  write_text(path, j.dump());
  CHECK_THROWS_AS(load_dictionary(path), DataError);

  CHECK_THROWS_AS(load_dictionary(dir.file("absent.json")), DataError);
}

TEST_CASE("scalar and matrix encodings") {
  for (double v : {0.0, -1.5, 1e-300, std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity()}) {
    CHECK(decode_scalar(encode_scalar(v)) == v);
  }
  CHECK(std::isnan(decode_scalar(encode_scalar(std::numeric_limits<double>::quiet_NaN()))));
  Rng rng(4);
  for (Index r = 0; r <= 4; ++r) {
    for (Index c = 0; c <= 3; ++c) {
      const Matrix a = rng.normal_matrix(r, c);
      CHECK(bit_equal(decode_matrix(encode_matrix(a)), a));
    }
  }
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("report CSV exports") {
  stability::TrialReport r;
  r.experiment = "x";
  r.checks = {{"a", 1, 1, 0.5}};
  stability::TrialOutcome o;
  o.trial = 0;
  o.admissible = false;
  o.reason = "too big, really";
  o.slack = {std::nullopt};
  r.trials.push_back(o);
  r.n_trials = 1;
  const auto csv = trial_slack_csv(r);
  CHECK(csv.find("trial,admissible,reason,epsilon,epsilon_actual,slack_a\n") == 0);
  CHECK(csv.find("too big; really") != std::string::npos);

  train::TrainTrace trace;
  trace.epochs.push_back({});
  trace.epochs.push_back({});
  const auto tcsv = trace_csv(trace);
  CHECK(std::count(tcsv.begin(), tcsv.end(), '\n') == 3);
}
