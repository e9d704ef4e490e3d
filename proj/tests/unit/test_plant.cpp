#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "geometry.hpp"
#include "observer.hpp"
#include "oracles.hpp"
#include "plant.hpp"

using namespace softteleop;
using namespace softteleop::plant;
using geometry::deg_to_rad;
using geometry::ModuleReading;
using geometry::ModuleSpec;

namespace {

const std::vector<ModuleSpec> kRobot(2, ModuleSpec{});

std::vector<double> lengths_for(const std::vector<ModuleReading>& readings) {
  std::vector<double> out;
  for (const auto& r : readings) {
    const auto l = oracle::lengths(3, 15.0, r.h_mm, r.phi_rad, r.theta_rad);
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

}  // namespace

TEST(InverseModule, EqualLengthsGiveZeroTilt) {
  const std::vector<double> l(3, 47.0);
  const InverseResult r = inverse_module(ModuleSpec{}, l);
  EXPECT_TRUE(r.ok());
  EXPECT_NEAR(r.reading.h_mm, 47.0, 1e-9);
  EXPECT_NEAR(r.reading.phi_rad, 0.0, 1e-9);
  EXPECT_NEAR(r.reading.theta_rad, 0.0, 1e-9);
  EXPECT_LT(r.residual_rms_mm, 1e-9);
}

TEST(InverseModule, RoundTripRandomReadings) {
  std::mt19937_64 rng(21);
  const ModuleSpec spec;
  std::uniform_real_distribution<double> tilt(-spec.tilt_limit_rad() * 0.7, spec.tilt_limit_rad() * 0.7);
  std::uniform_real_distribution<double> h(36.0, 54.0);
  for (int i = 0; i < 300; ++i) {
    const ModuleReading truth{h(rng), tilt(rng), tilt(rng)};
    const auto l = oracle::lengths(3, 15.0, truth.h_mm, truth.phi_rad, truth.theta_rad);
    const InverseResult r = inverse_module(spec, l);
    ASSERT_TRUE(r.ok()) << "trial " << i;
    ASSERT_NEAR(r.reading.h_mm, truth.h_mm, 1e-4);
    ASSERT_NEAR(r.reading.phi_rad, truth.phi_rad, 1e-4);
    ASSERT_NEAR(r.reading.theta_rad, truth.theta_rad, 1e-4);
  }
}

TEST(InverseModule, InfeasibleLengthsAreFlagged) {
  // One actuator at max, the others at min: needs far more tilt than allowed.
  const std::vector<double> l{60.0, 30.0, 30.0};
  const InverseResult r = inverse_module(ModuleSpec{}, l);
  EXPECT_FALSE(r.ok());
  EXPECT_GT(r.residual_rms_mm, 1e-3);
  EXPECT_LE(std::hypot(r.reading.phi_rad, r.reading.theta_rad), ModuleSpec{}.tilt_limit_rad() * std::sqrt(2.0) + 1e-9);
}

TEST(InverseModule, RejectsOutOfBounds) {
  const std::vector<double> l{70.0, 40.0, 40.0};
  EXPECT_THROW(inverse_module(ModuleSpec{}, l), Error);
}

TEST(Step, FixedPointWhenCommandMatchesTruth) {
  const PlantState s0 = rest_state(kRobot, 41.25, PlantMode::chord);
  const PlantState s1 = step(kRobot, s0, 100.0, chain_lengths(kRobot, s0.truth));
  EXPECT_EQ(s1.truth, s0.truth);
  EXPECT_EQ(s1.time_ms, s0.time_ms + 100);
}

TEST(Step, ConvergesAfterManyTimeConstants) {
  const std::vector<ModuleReading> target{{48.0, deg_to_rad(4.0), deg_to_rad(-3.0)}, {36.0, deg_to_rad(-2.0), 0.0}};
  PlantState s = rest_state(kRobot, 41.25, PlantMode::chord);
  const auto cmd = lengths_for(target);
  for (int i = 0; i < 60; ++i) s = step(kRobot, s, 100.0, cmd);
  for (std::size_t m = 0; m < 2; ++m) {
    EXPECT_NEAR(s.truth[m].h_mm, target[m].h_mm, 1e-3 * target[m].h_mm);
    EXPECT_NEAR(s.truth[m].phi_rad, target[m].phi_rad, 1e-3 * 0.1 + 1e-5);
  }
}

TEST(Step, GapHalvesAfterTauLn2) {
  const double tau = 300.0;
  const std::vector<ModuleReading> target{{50.0, deg_to_rad(6.0), deg_to_rad(2.0)}, {41.25, 0.0, 0.0}};
  const PlantState s0 = rest_state(kRobot, 41.25, PlantMode::chord);
  const PlantState s1 = step(kRobot, s0, tau * std::log(2.0), lengths_for(target), tau);
  const double grid_deg = deg_to_rad(1e-4);
  EXPECT_NEAR(s1.truth[0].h_mm, 41.25 + 0.5 * (50.0 - 41.25), 1e-4);
  EXPECT_NEAR(s1.truth[0].phi_rad, 0.5 * deg_to_rad(6.0), grid_deg);
  EXPECT_NEAR(s1.truth[0].theta_rad, 0.5 * deg_to_rad(2.0), grid_deg);
}

TEST(Noise, ZeroModelIsExact) {
  SensorNoise noise(NoiseModel::none());
  PlantState s = rest_state(kRobot, 41.25, PlantMode::chord);
  s.truth[0] = on_wire_grid({43.1, deg_to_rad(3.3), deg_to_rad(-1.7)});
  EXPECT_EQ(noise.noisy_readings(s), s.truth);
  const observer::SensorFrame f = observer::parse_sensor_line(noise.read_sensors(s));
  for (std::size_t m = 0; m < 2; ++m) {
    EXPECT_EQ(f.readings[m].h_mm, s.truth[m].h_mm);
    EXPECT_NEAR(f.readings[m].phi_rad, s.truth[m].phi_rad, 1e-15);
  }
}

TEST(Noise, SeededStreamsAreIdentical) {
  const PlantState s = rest_state(kRobot, 41.25, PlantMode::chord);
  SensorNoise a(NoiseModel{}), b(NoiseModel{});
  for (int i = 0; i < 200; ++i) ASSERT_EQ(a.read_sensors(s), b.read_sensors(s));
  SensorNoise c(NoiseModel{0.3, 3.5, 0.05, 20.0, 2});
  SensorNoise d(NoiseModel{});
  bool differs = false;
  for (int i = 0; i < 20; ++i) differs |= c.read_sensors(s) != d.read_sensors(s);
  EXPECT_TRUE(differs);
}

TEST(Noise, SpikeCountIsBinomial) {
  const std::vector<ModuleSpec> one(1, ModuleSpec{});
  const PlantState s = rest_state(one, 41.25, PlantMode::chord);
  SensorNoise noise(NoiseModel{0.0, 0.0, 0.05, 20.0, 99});
  const int n = 10000;
  int spikes = 0;
  for (int i = 0; i < n; ++i) spikes += std::abs(noise.noisy_readings(s)[0].h_mm - 41.25) > 10.0;
  const double mean = n * 0.05, sd = std::sqrt(n * 0.05 * 0.95);
  EXPECT_NEAR(spikes, mean, 3.0 * sd);
}

TEST(NoiseModel, Validate) {
  EXPECT_NO_THROW(NoiseModel{}.validate());
  EXPECT_THROW((NoiseModel{-1, 0, 0, 0, 1}.validate()), Error);
  EXPECT_THROW((NoiseModel{0, 0, 1.5, 0, 1}.validate()), Error);
}

TEST(ConstantCurvature, StraightLimitMatchesChord) {
  const geometry::Vec3 tip = constant_curvature_tip({42.5, 0.0, 0.0});
  EXPECT_EQ(tip, (geometry::Vec3{0, 0, 42.5}));
  const geometry::Vec3 tiny = constant_curvature_tip({42.5, 1e-7, 0.0});
  EXPECT_NEAR(tiny.z, 42.5, 1e-9);
}

TEST(ConstantCurvature, ArcFormulaAtTenDegrees) {
  const double s = 42.5, a = deg_to_rad(10.0);
  const geometry::Vec3 tip = constant_curvature_tip({s, a, 0.0});
  // Bending about local Y tilts the normal toward +X.
  EXPECT_NEAR(tip.x, s / a * (1.0 - std::cos(a)), 1e-9);
  EXPECT_NEAR(tip.y, 0.0, 1e-12);
  EXPECT_NEAR(tip.z, s / a * std::sin(a), 1e-9);
  const double offset = std::hypot(tip.x, tip.z - s);
  EXPECT_GT(offset, 0.0);
}

TEST(ConstantCurvature, BendDirectionFollowsNormal) {
  const ModuleReading r{45.0, deg_to_rad(4.0), deg_to_rad(-6.0)};
  const geometry::Vec3 n = geometry::rotation_from_imu(r.phi_rad, r.theta_rad).column(2);
  const geometry::Vec3 tip = constant_curvature_tip(r);
  EXPECT_NEAR(tip.x * n.y - tip.y * n.x, 0.0, 1e-12);
  EXPECT_GT(tip.x * n.x + tip.y * n.y, 0.0);
}

TEST(GroundTruth, ChordModeIsForwardChain) {
  PlantState s = rest_state(kRobot, 41.25, PlantMode::chord);
  s.truth[1] = {44.0, 0.05, -0.04};
  const auto a = ground_truth(kRobot, s);
  const auto b = geometry::forward_chain(kRobot, s.truth);
  EXPECT_EQ(a.end_effector, b.end_effector);
}

TEST(GroundTruth, ArcModeDeviatesWhenBent) {
  PlantState s = rest_state(kRobot, 41.25, PlantMode::constant_curvature);
  EXPECT_NEAR((ground_truth(kRobot, s).end_effector - geometry::Vec3{0, 0, 85}).norm(), 0.0, 1e-12);
  s.truth[0] = {41.25, deg_to_rad(8.0), 0.0};
  const auto arc = ground_truth(kRobot, s);
  const auto chord = geometry::forward_chain(kRobot, s.truth);
  EXPECT_GT((arc.end_effector - chord.end_effector).norm(), 0.5);
}

TEST(Plant, CommandLinesAreClampedAndChecked) {
  Plant p(kRobot, NoiseModel::none());
  EXPECT_EQ(p.actuator_total(), 6u);
  p.handle_command_line("C,70,20,45,45,45,45");
  const auto cmd = p.last_command();
  EXPECT_EQ(cmd[0], 60.0);
  EXPECT_EQ(cmd[1], 30.0);
  EXPECT_THROW(p.handle_command_line("C,45,45,45"), Error);
  EXPECT_THROW(p.handle_command_line("garbage"), Error);
}

TEST(Plant, SensorLineCarriesClock) {
  Plant p(kRobot, NoiseModel::none());
  p.advance(100.0);
  p.advance(100.0);
  const auto f = observer::parse_sensor_line(p.sensor_line());
  EXPECT_EQ(f.t_ms, 200);
  EXPECT_EQ(f.readings.size(), 2u);
  EXPECT_DOUBLE_EQ(f.readings[0].h_mm, 41.25);
}
