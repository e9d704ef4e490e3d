#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "config.hpp"
#include "error.hpp"
#include "eval.hpp"

using namespace softteleop;
using namespace softteleop::eval;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("softteleop_eval_" + std::to_string(::getpid()) + "_" + name);
}

ErrorReport table_shaped() {
  ErrorReport r;
  r.x = {2.41, 3.04, 2.78, 7.87, 0.98, 3.61, 0.0};
  r.y = {2.59, 3.56, 3.55, 9.35, 1.09, 2.96, 0.0};
  r.global = {3.93, 4.68, 2.54, 10.19, 2.04, 5.37, 0.0};
  r.sample_count = 339;
  return r;
}

config::AppConfig quiet() {
  config::AppConfig cfg = config::default_config();
  cfg.noise = plant::NoiseModel::none();
  return cfg;
}

TrajectorySpec short_circle(double seconds = 10.0) {
  TrajectorySpec t;
  t.duration_s = seconds;
  return t;
}

}  // namespace

TEST(Stats, OneTwoThree) {
  const std::vector<double> e{1, 2, 3};
  const ErrorRow r = stats_from_errors(e);
  EXPECT_DOUBLE_EQ(r.mae, 2.0);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(14.0 / 3.0));
  EXPECT_DOUBLE_EQ(r.max_mae, 3.0);
  EXPECT_DOUBLE_EQ(r.std, 1.0);
  EXPECT_DOUBLE_EQ(r.q1, 1.5);
  EXPECT_DOUBLE_EQ(r.q3, 2.5);
}

TEST(Stats, OutlierWidensRmseGap) {
  const std::vector<double> e{0, 0, 0, 4};
  const ErrorRow r = stats_from_errors(e);
  EXPECT_DOUBLE_EQ(r.mae, 1.0);
  EXPECT_DOUBLE_EQ(r.rmse, 2.0);
  EXPECT_DOUBLE_EQ(r.max_mae, 4.0);
}

TEST(Stats, AllZero) {
  const std::vector<double> e(5, 0.0);
  const ErrorRow r = stats_from_errors(e);
  for (double v : {r.mae, r.rmse, r.std, r.max_mae, r.q1, r.q3, r.std_signed}) EXPECT_EQ(v, 0.0);
}

TEST(Stats, SignIsIgnoredExceptInSignedStd) {
  const std::vector<double> a{-1, 2, -3}, b{1, 2, 3};
  const ErrorRow ra = stats_from_errors(a), rb = stats_from_errors(b);
  EXPECT_DOUBLE_EQ(ra.mae, rb.mae);
  EXPECT_DOUBLE_EQ(ra.rmse, rb.rmse);
  EXPECT_DOUBLE_EQ(ra.std, rb.std);
  EXPECT_NE(ra.std_signed, rb.std_signed);
}

TEST(Stats, NeedsTwoValues) {
  const std::vector<double> one{1.0};
  EXPECT_THROW(stats_from_errors(one), Error);
}

TEST(Stats, RandomInvariants) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> e(std::uniform_int_distribution<int>(2, 60)(rng));
    std::student_t_distribution<double> heavy(2.0);
    for (double& v : e) v = heavy(rng);
    const ErrorRow r = stats_from_errors(e);
    ASSERT_GE(r.rmse, r.mae - 1e-12);
    ASSERT_GE(r.mae, 0.0);
    ASSERT_LE(r.q1, r.q3);
    ASSERT_LE(r.q3, r.max_mae);
    // independent mean of |e|
    double s = 0;
    for (double v : e) s += std::abs(v);
    ASSERT_NEAR(r.mae, s / e.size(), 1e-12);
  }
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile({10, 20}, 0.25), 12.5);
  EXPECT_THROW(percentile({}, 0.5), Error);
}

TEST(ComputeStats, GlobalIsPlanarNorm) {
  std::vector<Sample> s(2);
  s[0].estimate = {3, 4, 9};
  s[1].estimate = {0, 0, 0};
  const ErrorRow g = compute_stats(s, Axis::global);
  EXPECT_DOUBLE_EQ(g.max_mae, 5.0);
  EXPECT_DOUBLE_EQ(g.mae, 2.5);
  EXPECT_DOUBLE_EQ(compute_stats(s, Axis::z).max_mae, 9.0);
}

TEST(Report, CsvMatchesTableLayout) {
  const std::string csv = report_csv(table_shaped());
  EXPECT_EQ(csv,
            "metric,mae,rmse,std,max_mae,q1,q3\n"
            "x,2.41,3.04,2.78,7.87,0.98,3.61\n"
            "y,2.59,3.56,3.55,9.35,1.09,2.96\n"
            "global,3.93,4.68,2.54,10.19,2.04,5.37\n");
}

TEST(Report, JsonAndCsvAgree) {
  const ErrorReport r = table_shaped();
  const auto path_csv = temp_file("r.csv"), path_json = temp_file("r.json");
  emit_report(r, ReportFormat::csv, path_csv);
  emit_report(r, ReportFormat::json, path_json);
  const auto j = nlohmann::json::parse(slurp(path_json));
  std::istringstream lines(slurp(path_csv));
  std::string line;
  std::getline(lines, line);
  for (const char* row : {"x", "y", "global"}) {
    std::getline(lines, line);
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    EXPECT_EQ(cell, row);
    for (const char* col : {"mae", "rmse", "std", "max_mae", "q1", "q3"}) {
      std::getline(cells, cell, ',');
      EXPECT_DOUBLE_EQ(std::stod(cell), j[row][col].get<double>()) << row << "." << col;
    }
  }
  EXPECT_EQ(j["sample_count"], 339);
  std::filesystem::remove(path_csv);
  std::filesystem::remove(path_json);
}

TEST(Report, EmptyReportWritesNothing) {
  const auto path = temp_file("empty.csv");
  std::filesystem::remove(path);
  EXPECT_THROW(emit_report(ErrorReport{}, ReportFormat::csv, path), Error);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Report, UnwritablePath) {
  EXPECT_THROW(emit_report(table_shaped(), ReportFormat::csv, "/nonexistent-dir/x.csv"), Error);
}

TEST(Trajectory, BuiltinsAndValidation) {
  EXPECT_EQ(load_trajectory("builtin:circle").kind, TrajectorySpec::Kind::circle);
  EXPECT_EQ(load_trajectory("builtin:lemniscate").kind, TrajectorySpec::Kind::lemniscate);
  EXPECT_THROW(load_trajectory("builtin:spiral"), Error);
  EXPECT_THROW(load_trajectory("/nonexistent/traj.json"), Error);
  EXPECT_EQ(TrajectorySpec{}.sample_count(), 600u);
  TrajectorySpec bad;
  bad.sample_period_ms = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Trajectory, WaypointFile) {
  const auto path = temp_file("wp.json");
  std::ofstream(path) << R"({"waypoints":[{"module":1,"pos_mm":[3,0,85]},{"module":1,"pos_mm":[-3,2,84]}]})";
  const TrajectorySpec t = load_trajectory(path.string());
  EXPECT_EQ(t.kind, TrajectorySpec::Kind::waypoints);
  ASSERT_EQ(t.waypoints.size(), 2u);
  EXPECT_EQ(t.waypoints[1].target_mm, (geometry::Vec3{-3, 2, 84}));
  std::filesystem::remove(path);
}

TEST(RunEval, ZeroNoiseChordIsExact) {
  const auto samples = run_eval(quiet(), TrajectorySpec{});
  ASSERT_GE(samples.size(), 600u);
  for (const Sample& s : samples) ASSERT_LT((s.estimate - s.truth).norm(), 1e-6) << "t=" << s.t_ms;
  const ErrorReport r = build_report(samples);
  EXPECT_LT(r.global.rmse, 1e-6);
  EXPECT_EQ(samples.back().t_ms, 60000);
}

TEST(RunEval, SeededRunsRepeat) {
  const config::AppConfig cfg = config::default_config();
  const auto a = run_eval(cfg, short_circle());
  const auto b = run_eval(cfg, short_circle());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].estimate, b[i].estimate);
    ASSERT_EQ(a[i].truth, b[i].truth);
  }
  EXPECT_EQ(samples_csv(a), samples_csv(b));
}

TEST(RunEval, NoiseProducesErrorOfMillimetreOrder) {
  const ErrorReport r = build_report(run_eval(config::default_config(), TrajectorySpec{}));
  EXPECT_GT(r.global.mae, 1.0);
  EXPECT_LT(r.global.mae, 8.0);
  EXPECT_GE(r.global.rmse, r.global.mae);
}

TEST(RunEval, ArcModelErrorGrowsWithTilt) {
  config::AppConfig cfg = quiet();
  cfg.plant_mode = plant::PlantMode::constant_curvature;
  TrajectorySpec t;
  t.kind = TrajectorySpec::Kind::lemniscate;
  const auto samples = run_eval(cfg, t);
  std::vector<double> tilt, err;
  for (const Sample& s : samples) {
    tilt.push_back(s.tilt_rad);
    err.push_back(std::hypot(s.estimate.x - s.truth.x, s.estimate.y - s.truth.y));
  }
  EXPECT_GT(*std::max_element(err.begin(), err.end()), 0.1);
  EXPECT_GT(rank_correlation(tilt, err), 0.5);
}

TEST(SamplesCsv, Header) {
  std::vector<Sample> s(1);
  s[0].t_ms = 100;
  s[0].truth = {1, 2, 3};
  EXPECT_EQ(samples_csv(s),
            "t_ms,est_x,est_y,est_z,true_x,true_y,true_z\n"
            "100,0.000000,0.000000,0.000000,1.000000,2.000000,3.000000\n");
}

TEST(RankCorrelation, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4, 5}, up{2, 4, 6, 8, 100}, down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(rank_correlation(a, up), 1.0);
  EXPECT_DOUBLE_EQ(rank_correlation(a, down), -1.0);
  const std::vector<double> ties{1, 1, 2, 2, 3};
  EXPECT_GT(rank_correlation(a, ties), 0.9);
}
