#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iaqcast/datagen.hpp"
#include "iaqcast/dataset.hpp"

using namespace iaq;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

RawSeries linear_series(std::size_t n) {
  // co2 rises linearly, pm25 falls; easy to predict positions from values
  std::ostringstream ss;
  ss << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  for (std::size_t i = 0; i < n; ++i)
    ss << i << "," << 21 + 0.01 * static_cast<double>(i % 7) << ","
       << 45 + 0.1 * static_cast<double>(i % 13) << ","
       << 400 + static_cast<double>(i) << ","
       << 100 - 0.5 * static_cast<double>(i) << ",\n";
  write_file("ds_linear.csv", ss.str());
  RawSeries s = ingest_csv("ds_linear.csv");
  std::remove("ds_linear.csv");
  return s;
}

}  // namespace

TEST_CASE("export -> ingest -> export is byte-identical") {
  Scenario sc = default_day_scenario(5);
  Trace t = simulate(sc);
  TempFile f1("ds_rt1.csv"), f2("ds_rt2.csv");
  export_csv(t, f1.path);
  RawSeries s = ingest_csv(f1.path);
  REQUIRE(s.size() == t.co2.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s.channels[2][i] == doctest::Approx(t.co2[i]).epsilon(1e-11));
    CHECK(s.activity[i] == t.activity[i]);
  }
  Trace t2;
  t2.timestamps = s.timestamps;
  t2.temp = s.channels[0];
  t2.rh = s.channels[1];
  t2.co2 = s.channels[2];
  t2.pm25 = s.channels[3];
  t2.activity = s.activity;
  export_csv(t2, f2.path);
  CHECK(slurp(f1.path) == slurp(f2.path));
}

TEST_CASE("shuffled rows give a non-monotone timestamp error") {
  TempFile f("ds_shuffled.csv");
  write_file(f.path,
             "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n"
             "0,21,45,400,10,\n"
             "2,21,45,401,10,\n"
             "1,21,45,402,10,\n");
  CHECK_THROWS_AS(ingest_csv(f.path), Error);
}

TEST_CASE("header mismatch is a data error") {
  TempFile f("ds_badhdr.csv");
  write_file(f.path, "timestamp,temp_c,rh_pct,co2_ppm,activity\n0,21,45,400,\n");
  CHECK_THROWS_AS(ingest_csv(f.path), Error);
}

TEST_CASE("single interior missing value is linearly interpolated") {
  TempFile f("ds_gap.csv");
  std::ostringstream ss;
  ss << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  for (int i = 0; i < 10; ++i) {
    if (i == 4)
      ss << i << ",21,45,,10,\n";
    else
      ss << i << ",21,45," << 400 + 10 * i << ",10,\n";
  }
  write_file(f.path, ss.str());
  RawSeries s = ingest_csv(f.path);
  CHECK(s.channels[2][4] == doctest::Approx(0.5 * (430.0 + 450.0)));
  CHECK(s.valid[4] == 1);
}

TEST_CASE("long gaps invalidate steps instead of interpolating") {
  std::ostringstream ss;
  ss << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  for (int i = 0; i < 40; ++i) {
    if (i >= 10 && i < 17)
      ss << i << ",21,45,,10,\n";  // 7-step gap in co2
    else
      ss << i << ",21,45,400,10,\n";
  }
  TempFile f("ds_longgap.csv");
  write_file(f.path, ss.str());
  RawSeries s = ingest_csv(f.path);
  CHECK(s.valid[10] == 0);
  CHECK(s.valid[16] == 0);
  CHECK(s.valid[17] == 1);
}

TEST_CASE("more than 20% missing in a channel is a hard error") {
  std::ostringstream ss;
  ss << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  for (int i = 0; i < 10; ++i)
    ss << i << ",21,45," << (i < 3 ? "" : "400") << ",10,\n";
  TempFile f("ds_missing.csv");
  write_file(f.path, ss.str());
  CHECK_THROWS_AS(ingest_csv(f.path), Error);
}

TEST_CASE("hash embeddings are deterministic, unit norm, zero for idle") {
  auto p = EmbeddingProvider::hash_mode(32);
  std::vector<double> a(32), b(32), z(32);
  p.embed("frying", a.data());
  p.embed("frying", b.data());
  p.embed("", z.data());
  double norm = 0;
  for (int i = 0; i < 32; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(z[i] == 0.0);
    norm += a[i] * a[i];
  }
  CHECK(norm == doctest::Approx(1.0));

  std::vector<double> c(32);
  p.embed("window open", c.data());
  bool differs = false;
  for (int i = 0; i < 32; ++i) differs = differs || c[i] != a[i];
  CHECK(differs);
}

TEST_CASE("table embeddings reproduce the file exactly and reject unknowns") {
  TempFile f("ds_table.json");
  write_file(f.path, R"({"frying":[1,0,0],"cleaning":[0,1,0],"making tea":[0,0,1],"toasting":[0.5,0.5,0]})");
  auto p = EmbeddingProvider::table_mode(f.path);
  CHECK(p.dim() == 3);
  std::vector<double> v(3);
  p.embed("toasting", v.data());
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 0.0);
  CHECK_THROWS_AS(p.embed("unknown", v.data()), Error);
  p.embed("", v.data());
  CHECK(v[0] == 0.0);
}

TEST_CASE("window count matches the arithmetic") {
  RawSeries s = linear_series(100);
  WindowConfig cfg;
  cfg.lookback = 48;
  cfg.horizon = 15;
  cfg.stride = 1;
  cfg.split = {1.0, 0.0, 0.0};
  auto p = EmbeddingProvider::hash_mode(8);
  WindowSet ws = make_windows(s, cfg, p);
  CHECK(ws.train.size() == 38);
  CHECK(ws.val.empty());
  CHECK(ws.test.empty());
}

TEST_CASE("stride L+P gives non-overlapping windows") {
  RawSeries s = linear_series(200);
  WindowConfig cfg;
  cfg.lookback = 48;
  cfg.horizon = 15;
  cfg.stride = 63;
  cfg.split = {1.0, 0.0, 0.0};
  auto p = EmbeddingProvider::hash_mode(4);
  WindowSet ws = make_windows(s, cfg, p);
  REQUIRE(ws.train.size() >= 2);
  for (std::size_t i = 1; i < ws.train.size(); ++i)
    CHECK(ws.train[i].start >= ws.train[i - 1].start + 63);
}

TEST_CASE("inputs and targets never overlap in time") {
  RawSeries s = linear_series(120);
  WindowConfig cfg;
  cfg.lookback = 10;
  cfg.horizon = 5;
  cfg.split = {1.0, 0.0, 0.0};
  auto p = EmbeddingProvider::hash_mode(4);
  WindowSet ws = make_windows(s, cfg, p);
  for (const auto& w : ws.train) {
    // last input row denormalizes to the co2 value at s+L-1
    const double last_in = ws.norm.inverse(2, w.x_env[(10 - 1) * kNumEnvChannels + 2]);
    CHECK(last_in == doctest::Approx(400.0 + static_cast<double>(w.start + 9)));
    // first target row is the value one step later
    CHECK(w.y_phys[0] == doctest::Approx(400.0 + static_cast<double>(w.start + 10)));
  }
}

TEST_CASE("split hygiene: train indices < val indices < test indices") {
  RawSeries s = linear_series(300);
  WindowConfig cfg;
  cfg.lookback = 20;
  cfg.horizon = 5;
  auto p = EmbeddingProvider::hash_mode(4);
  WindowSet ws = make_windows(s, cfg, p);
  REQUIRE(!ws.train.empty());
  REQUIRE(!ws.val.empty());
  REQUIRE(!ws.test.empty());
  const std::size_t max_train_end = ws.train.back().start + 25;
  const std::size_t min_val = ws.val.front().start;
  const std::size_t max_val_end = ws.val.back().start + 25;
  const std::size_t min_test = ws.test.front().start;
  CHECK(max_train_end <= min_val + 25);  // windows live inside their split
  CHECK(ws.train.back().start + 25 <= ws.split_bounds[0]);
  CHECK(min_val >= ws.split_bounds[0]);
  CHECK(max_val_end <= ws.split_bounds[1]);
  CHECK(min_test >= ws.split_bounds[1]);
}

TEST_CASE("normalizer is fit on the training split only") {
  RawSeries s = linear_series(200);
  WindowConfig cfg;
  cfg.lookback = 20;
  cfg.horizon = 5;
  auto p = EmbeddingProvider::hash_mode(4);
  WindowSet ws = make_windows(s, cfg, p);
  // train rows are [0, 140): co2 mean over 400..539
  double expect_mean = 0;
  for (int i = 0; i < 140; ++i) expect_mean += 400.0 + i;
  expect_mean /= 140.0;
  CHECK(ws.norm.mean[2] == doctest::Approx(expect_mean));
  // transform/inverse identity
  const double v = 873.25;
  CHECK(ws.norm.inverse(2, ws.norm.transform(2, v)) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("no lookahead: perturbing values beyond a window leaves it unchanged") {
  std::ostringstream ss;
  ss << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  for (int i = 0; i < 200; ++i)
    ss << i << "," << 21 + 0.01 * (i % 5) << "," << 45 + 0.1 * (i % 9) << ","
       << 400 + (i % 37) << "," << 10 + (i % 11) << ",\n";
  TempFile f("ds_look.csv");
  write_file(f.path, ss.str());
  RawSeries s = ingest_csv(f.path);

  WindowConfig cfg;
  cfg.lookback = 20;
  cfg.horizon = 5;
  auto p = EmbeddingProvider::hash_mode(4);
  WindowSet a = make_windows(s, cfg, p);

  RawSeries s2 = s;
  // perturb inside the test split, beyond the first test window's end
  const std::size_t first_test_end = a.test.front().start + 25;
  s2.channels[2][first_test_end + 3] += 1000.0;
  WindowSet b = make_windows(s2, cfg, p);

  // all train windows identical (normalizer untouched)
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    for (std::size_t k = 0; k < a.train[i].x_env.size(); ++k)
      CHECK(a.train[i].x_env[k] == b.train[i].x_env[k]);
  // the first test window is identical too
  for (std::size_t k = 0; k < a.test.front().x_env.size(); ++k)
    CHECK(a.test.front().x_env[k] == b.test.front().x_env[k]);
  for (std::size_t k = 0; k < a.test.front().y.size(); ++k)
    CHECK(a.test.front().y[k] == b.test.front().y[k]);
}

TEST_CASE("series too short is an error") {
  RawSeries s = linear_series(50);
  WindowConfig cfg;
  cfg.lookback = 48;
  cfg.horizon = 15;
  auto p = EmbeddingProvider::hash_mode(4);
  CHECK_THROWS_AS(make_windows(s, cfg, p), Error);
}
