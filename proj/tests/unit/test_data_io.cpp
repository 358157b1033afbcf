#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qdm/data_io.hpp"
#include "qdm/error.hpp"

using namespace qdm;

namespace {

std::string tmp_path(const std::string& name) {
  const char* dir = std::getenv("QDM_TEST_TMP");
  std::filesystem::path p = dir ? dir : std::filesystem::temp_directory_path();
  std::filesystem::create_directories(p);
  return (p / name).string();
}

// Header-layout TE file: one run per (fault, run) pair with `rows` samples
// of `m` measurements; reading j of sample s is fault + s/1000 + j.
std::string write_te_header(const std::string& name, const std::vector<std::pair<int, int>>& runs, std::size_t rows,
                            std::size_t m = 3) {
  const std::string path = tmp_path(name);
  std::ofstream out(path);
  out << "faultNumber,simulationRun,sample";
  for (std::size_t j = 0; j < m; ++j) out << ",xmeas_" << j + 1;
  out << "\n";
  for (const auto& [fault, run] : runs)
    for (std::size_t s = 1; s <= rows; ++s) {
      out << fault << "," << run << "," << s;
      for (std::size_t j = 0; j < m; ++j) out << "," << fault + static_cast<double>(s) / 1000.0 + static_cast<double>(j);
      out << "\n";
    }
  return path;
}

std::string write_text(const std::string& name, const std::string& body) {
  const std::string path = tmp_path(name);
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("TE 500-row run has a 20-row normal prefix") {
  const std::string path = write_te_header("te500.csv", {{1, 1}}, 500);
  const auto runs = load_te_csv(path, kTeFaults);
  REQUIRE(runs.size() == 1);
  std::size_t unlabelled = 0, fault = 0;
  for (int l : runs[0].labels) (l == kUnlabelled ? unlabelled : fault) += 1;
  CHECK(unlabelled == 20);
  CHECK(fault == 480);
  CHECK(runs[0].labels[19] == kUnlabelled);
  CHECK(runs[0].labels[20] == 0);
  CHECK(runs[0].matrix.cols == 3);
  CHECK(runs[0].matrix.at(0, 1) == doctest::Approx(2.001));

  // Windows ending inside the prefix are dropped.
  CHECK(windows_from_runs(runs, 100, 1, 7).size() == 401);
  const WindowedDataset ds = windows_from_runs(runs, 10, 1, 7);
  CHECK(ds.size() == 491 - 11);
}

TEST_CASE("TE 960-row run has a 160-row normal prefix") {
  const std::string path = write_te_header("te960.csv", {{5, 1}}, 960);
  const auto runs = load_te_csv(path, kTeFaults);
  REQUIRE(runs.size() == 1);
  std::size_t fault = 0;
  for (int l : runs[0].labels) fault += l == 1;
  CHECK(fault == 800);
}

TEST_CASE("TE normal rows kept as class 0") {
  const std::string path = write_te_header("te_normal.csv", {{0, 1}, {8, 1}}, 500);
  TeOptions opts;
  opts.keep_normal = true;
  const auto runs = load_te_csv(path, kTeFaults, opts);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].labels.front() == 0);
  CHECK(runs[1].labels.front() == 0);
  CHECK(runs[1].labels.back() == 4);  // fault 8 is the fourth selected fault
  const LabelMap m = te_label_map(kTeFaults, true);
  CHECK(m.names[0] == "Normal");
  CHECK(m.names[4] == "Fault 8");
  CHECK(te_label_map(kTeFaults, false).source_ids == kTeFaults);
}

TEST_CASE("TE runs are split by fault and simulation run") {
  const std::string path = write_te_header("te_multi.csv", {{1, 1}, {1, 2}, {12, 1}, {3, 1}}, 500);
  const auto runs = load_te_csv(path, kTeFaults);
  CHECK(runs.size() == 3);  // fault 3 is not selected
}

TEST_CASE("TE prefix rule") {
  CHECK(te_normal_prefix(500) == 20);
  CHECK(te_normal_prefix(960) == 160);
  CHECK(te_normal_prefix(480) == 0);
  CHECK_THROWS_AS(te_normal_prefix(777), ConfigError);
}

TEST_CASE("headerless TE files") {
  std::string body;
  for (int r = 0; r < 480; ++r) body += std::to_string(r) + " 1.5 2.5\n";
  const std::string path = write_text("d05.dat", body);
  const auto runs = load_te_csv(path, kTeFaults);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].source_id == 5);
  CHECK(runs[0].labels.front() == 1);
  CHECK(runs[0].matrix.rows == 480);

  const std::string anonymous = write_text("anon.dat", body);
  CHECK_THROWS_AS(load_te_csv(anonymous, kTeFaults), ConfigError);
  TeOptions opts;
  opts.fault_id = 20;
  CHECK(load_te_csv(anonymous, kTeFaults, opts)[0].labels.front() == 6);
}

TEST_CASE("TE input errors") {
  CHECK_THROWS_AS(load_te_csv(write_text("empty.csv", ""), kTeFaults), ParseError);
  CHECK_THROWS_AS(load_te_csv(tmp_path("missing.csv"), kTeFaults), IoError);
  CHECK_THROWS_AS(load_te_csv(write_te_header("te_bad_fault.csv", {{1, 1}}, 500), {1, 22}), ConfigError);
  CHECK_THROWS_AS(load_te_csv(write_te_header("te_dup.csv", {{1, 1}}, 500), {1, 1}), ConfigError);

  std::string body = "faultNumber,simulationRun,sample,a,b\n1,1,1,0.5,0.5\n1,1,2,0.5\n";
  try {
    load_te_csv(write_text("short_row.csv", body), kTeFaults);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("short_row.csv:3") != std::string::npos);
  }
  body = "faultNumber,simulationRun,sample,a\n1,1,1,0.5\n1,1,2,abc\n";
  try {
    load_te_csv(write_text("nonnumeric.csv", body), kTeFaults);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("nonnumeric.csv:3") != std::string::npos);
  }
}

TEST_CASE("CWRU labels") {
  CHECK(cwru_label("Normal") == 0);
  CHECK(cwru_label("Ball", 0.007) == 1);
  CHECK(cwru_label("Ball", 0.014) == 2);
  CHECK(cwru_label("Inner", 0.021) == 6);
  CHECK(cwru_label("Outer", 0.022) == 9);
  CHECK(cwru_label("Outer", 0.007) == 7);
  CHECK_THROWS_AS(cwru_label("Ball", 0.028), ConfigError);
  CHECK_THROWS_AS(cwru_label("Cage", 0.007), ConfigError);
  const LabelMap m = cwru_label_map();
  CHECK(m.size() == 10);
  CHECK(m.names[0] == "Normal");
}

TEST_CASE("signal windowing") {
  std::vector<double> sig(400);
  for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = std::sin(0.1 * static_cast<double>(i));
  CHECK(signal_windows(sig, 3, 400, 32, 10).size() == 1);
  std::vector<double> longer(1040, 0.5);
  const WindowedDataset ds = signal_windows(longer, 4, 400, 32, 10);
  CHECK(ds.size() == 21);
  CHECK(ds.label(20) == 4);
  CHECK(ds.feature_count() == 1);
  CHECK_THROWS_AS(signal_windows(std::vector<double>(399, 0.0), 0, 400, 32, 10), ContractError);

  SUBCASE("text and container files") {
    std::string body = "# drive end\n";
    for (double v : sig) body += std::to_string(v) + "\n";
    const std::string txt = write_text("sig.txt", body);
    CHECK(read_signal(txt).size() == 400);
    const std::string bin = tmp_path("sig.qdms");
    write_signal(bin, sig);
    CHECK(read_signal(bin) == sig);
    const WindowedDataset loaded = load_signal(bin, 2);
    CHECK(loaded.size() == 1);
    CHECK(loaded.label_map().names[2] == cwru_label_map().names[2]);
    CHECK_THROWS_AS(read_signal(write_text("bad_sig.txt", "1.0\nx\n")), ParseError);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticConfig s;
  s.samples_per_class = {50, 50, 50, 50};
  s.seed = 7;
  const WindowedDataset a = synthetic_dataset(s);
  const WindowedDataset b = synthetic_dataset(s);
  CHECK(a.same_content(b));
  CHECK(a.size() == 200);
  CHECK(a.window_length() == 20);
  CHECK(a.feature_count() == 2);
  CHECK(a.label_map().names[3] == "Class 3");
  s.seed = 8;
  CHECK_FALSE(synthetic_dataset(s).same_content(a));

  SUBCASE("noise-free classes are perfectly separable") {
    SyntheticConfig z = s;
    z.noise = 0.0;
    const WindowedDataset d = synthetic_dataset(z);
    CHECK(nearest_centroid_accuracy(d, d) == 1.0);
  }
  SUBCASE("default difficulty is easy for a centroid classifier") {
    SyntheticConfig fit;
    fit.seed = 1;
    SyntheticConfig score = fit;
    score.seed = 2;
    CHECK(nearest_centroid_accuracy(synthetic_dataset(fit), synthetic_dataset(score)) >= 0.95);
  }
  SUBCASE("per-class counts and validation") {
    SyntheticConfig u = s;
    u.samples_per_class = {30, 3, 30, 30};
    CHECK(synthetic_dataset(u).class_size(1) == 3);
    u.samples_per_class = {1, 2};
    CHECK_THROWS_AS(u.validate(), ConfigError);
    SyntheticConfig dup = s;
    dup.regimes = {{0, 1, 0.5}, {0, 1, 0.5}, {0, 2, 0.5}, {0, 3, 0.5}};
    CHECK_THROWS_AS(dup.validate(), ConfigError);
  }
}

TEST_CASE("dataset container round trip is bit-exact") {
  SyntheticConfig s;
  s.samples_per_class = {10, 4, 10, 10};
  WindowedDataset ds = synthetic_dataset(s);
  ds.set_imbalance_set({1});
  ds = apply_normalization(ds, fit_normalization(ds));
  const std::string path = tmp_path("ds.qdmd");
  save_dataset(path, ds);
  const WindowedDataset back = load_dataset(path);
  CHECK(back.same_content(ds));
  CHECK(back.fingerprint() == ds.fingerprint());
  CHECK(back.imbalance_set() == ds.imbalance_set());
  CHECK(back.normalization() == ds.normalization());

  // Truncated files are rejected.
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS(load_dataset(path));
}
