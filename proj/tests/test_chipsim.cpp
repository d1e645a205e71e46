#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lea/chipsim.hpp"
#include "lea/errors.hpp"
#include "support/properties.hpp"

using namespace lea;
using namespace lea::chip;

TEST(Faults, ExactCountPerKernel) {
  SimChip chip(NoiseConfig::ideal(), true);
  const auto& m = chip.inject_faults(0.0432, Fault::StuckHigh, 3);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(m.count(k), 27u);
  EXPECT_EQ(m.count(), 27u * 32);
  SimChip again(NoiseConfig::ideal(), true);
  EXPECT_EQ(again.inject_faults(0.0432, Fault::StuckHigh, 3), m);
  SimChip other(NoiseConfig::ideal(), true);
  EXPECT_NE(other.inject_faults(0.0432, Fault::StuckHigh, 4), m);
}

TEST(Faults, ZeroAndFullRate) {
  SimChip a(NoiseConfig::ideal(), true), b(NoiseConfig::ideal(), true);
  EXPECT_EQ(a.inject_faults(0.0, Fault::StuckHigh, 1).count(), 0u);
  EXPECT_EQ(b.inject_faults(1.0, Fault::StuckLow, 1).count(), 32u * 625);
  EXPECT_THROW(a.inject_faults(1.5, Fault::StuckHigh, 1), InvalidInput);
}

TEST(Faults, PinnedValues) {
  SimChip chip;
  chip.set_fault({0, 0, 0}, Fault::StuckHigh);
  chip.set_fault({0, 0, 1}, Fault::StuckLow);
  chip.set_fault({0, 0, 2}, Fault::Shorted);
  EXPECT_EQ(chip.conductance({0, 0, 0}), 300.0);
  EXPECT_EQ(chip.conductance({0, 0, 1}), 100.0);
  EXPECT_EQ(chip.conductance({0, 0, 2}), 3000.0);
  auto r = chip.program_device({0, 0, 0}, 133.0, kDefaultTheta);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.iterations, SimChip::kDefaultMaxIters);
  EXPECT_EQ(chip.conductance({0, 0, 0}), 300.0);
}

TEST(Program, IdealConvergesInOneStep) {
  SimChip chip(NoiseConfig::ideal(), true);
  auto r = chip.program_device({2, 3, 4}, 167.0, kDefaultTheta);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(chip.conductance({2, 3, 4}), 167.0);
}

TEST(Program, NoisyLandsWithinMargin) {
  SimChip chip(NoiseConfig::defaults(11));
  for (std::size_t c = 0; c < 25; ++c) {
    auto r = chip.program_device({0, 0, c}, 200.0, kDefaultTheta);
    ASSERT_TRUE(r.success);
    EXPECT_LE(std::abs(r.final_read - 200.0), kDefaultTheta);
    EXPECT_GE(chip.conductance({0, 0, c}), 100.0);
    EXPECT_LE(chip.conductance({0, 0, c}), 300.0);
  }
}

TEST(Program, RejectsBadArguments) {
  SimChip chip;
  EXPECT_THROW(chip.program_device({0, 0, 0}, 50.0, kDefaultTheta), InvalidInput);
  EXPECT_THROW(chip.program_device({0, 0, 0}, 200.0, 0.0), InvalidInput);
  EXPECT_THROW(chip.program_device({32, 0, 0}, 200.0, kDefaultTheta), InvalidInput);
  EXPECT_THROW(chip.program_block({0, 20, 0, 10, 2}, Matrix(10, 2, 200.0), kDefaultTheta),
               InvalidInput);
}

TEST(LevelsWrite, YieldWithStuckDevices) {
  SimChip chip(NoiseConfig::defaults(5));
  chip.inject_faults(0.0432, Fault::StuckHigh, 9);
  auto w = random_levels_write(chip, 0, 1, kDefaultTheta);
  EXPECT_EQ(w.programmed.n_success(), 598u);
  for (std::size_t r = 0; r < 25; ++r)
    for (std::size_t c = 0; c < 25; ++c)
      EXPECT_EQ(w.programmed.success(r, c) == 1, !chip.faults().faulty(0, r, c));
}

TEST(LevelsWrite, LevelsAreUniform) {
  SimChip chip(NoiseConfig::ideal(), true);
  int h[4] = {0, 0, 0, 0};
  for (std::size_t k = 0; k < 16; ++k) {
    auto w = random_levels_write(chip, k, 100 + k, kDefaultTheta);
    for (int v : w.level_index.data()) ++h[v];
  }
  // chi-square, 3 dof, 0.1% critical value 16.27
  const double expected = 16 * 625 / 4.0;
  double chi2 = 0;
  for (int v : h) chi2 += (v - expected) * (v - expected) / expected;
  EXPECT_LT(chi2, 16.27);
}

TEST(Read, NoiseStandardDeviation) {
  NoiseConfig n = NoiseConfig::ideal(7);
  n.read_current_sigma = 0.5;
  SimChip chip(n);
  chip.program_device({0, 0, 0}, 200.0, kDefaultTheta);
  std::vector<double> v(25, 0.0);
  v[0] = 0.3;
  double s = 0, ss = 0;
  const int reads = 4000;
  for (int i = 0; i < reads; ++i) {
    double x = chip.kernel_vmm(0, v)[0];
    s += x;
    ss += x * x;
  }
  double mean = s / reads, sd = std::sqrt(ss / reads - mean * mean);
  EXPECT_NEAR(mean, 60.0, 0.05);
  EXPECT_NEAR(sd, 0.5, 0.1);
}

TEST(Vmm, MatchesOracleAndIsLinear) {
  auto r = lea::testing::vmm_oracle_linearity(200, 6);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Vmm, RejectsBadVoltages) {
  SimChip chip;
  EXPECT_THROW(chip.kernel_vmm(0, std::vector<double>(24, 0.0)), InvalidInput);
  std::vector<double> v(25, 0.0);
  v[3] = 0.31;
  EXPECT_THROW(chip.kernel_vmm(0, v), InvalidInput);
  v[3] = NAN;
  EXPECT_THROW(chip.kernel_vmm(0, v), InvalidInput);
}

TEST(Adc, RoundsToNearestCode) {
  NoiseConfig n = NoiseConfig::ideal();
  n.adc_bits = 4;
  n.adc_fullscale = 80.0;  // lsb 10 uA
  SimChip chip(n);
  chip.program_device({0, 0, 0}, 200.0, kDefaultTheta);
  chip.program_device({0, 1, 0}, 233.0, kDefaultTheta);
  std::vector<double> v(25, 0.0);
  v[0] = 0.29;
  auto i = chip.kernel_vmm(0, v);
  EXPECT_DOUBLE_EQ(i[0], 60.0);  // 58
  EXPECT_DOUBLE_EQ(i[1], 70.0);  // 67.57
  EXPECT_DOUBLE_EQ(i[2], 30.0);  // 29, device at the floor
}

TEST(Adc, ClipsToFullScale) {
  NoiseConfig n = NoiseConfig::ideal();
  n.adc_bits = 12;
  SimChip chip(n);
  std::vector<double> v(25, 0.3);
  // 25 devices at the 100 uS floor: 750 uA, beyond the 250 uA range.
  EXPECT_EQ(chip.kernel_vmm(0, v)[0], 250.0);
}

TEST(Noise, ValidateAndPresets) {
  EXPECT_EQ(NoiseConfig::ideal().prog_sigma, 0.0);
  EXPECT_EQ(NoiseConfig::hardware_like().adc_bits, 12);
  EXPECT_FALSE(NoiseConfig::defaults().adc_bits.has_value());
  NoiseConfig n;
  n.prog_sigma = -1;
  EXPECT_THROW(n.validate(), InvalidInput);
  n = {};
  n.adc_bits = 2;
  EXPECT_THROW(n.validate(), InvalidInput);
  EXPECT_THROW(SimChip{n}, InvalidInput);
}

TEST(Persistence, RoundTripContinuesStream) {
  SimChip chip(NoiseConfig::hardware_like(21));
  chip.inject_faults(0.1, Fault::StuckLow, 2);
  random_levels_write(chip, 1, 3, kDefaultTheta);
  std::stringstream ss;
  chip.save(ss);
  auto back = SimChip::load(ss);
  EXPECT_EQ(back.faults(), chip.faults());
  EXPECT_EQ(back.noise(), chip.noise());
  for (std::size_t c = 0; c < 25; ++c) EXPECT_EQ(back.conductance({1, 4, c}), chip.conductance({1, 4, c}));
  std::vector<double> v(25, 0.1);
  EXPECT_EQ(back.kernel_vmm(1, v), chip.kernel_vmm(1, v));
}

TEST(Persistence, RejectsOtherVersions) {
  SimChip chip;
  std::stringstream ss;
  chip.save(ss);
  auto j = nlohmann::json::parse(ss.str());
  j["version"] = 2;
  std::stringstream in(j.dump());
  EXPECT_THROW(SimChip::load(in), InvalidInput);
  std::stringstream junk("{not json");
  EXPECT_THROW(SimChip::load(junk), InvalidInput);
}

TEST(FaultCsv, ListsFaultedDevicesOnly) {
  SimChip chip;
  chip.set_fault({1, 2, 3}, Fault::Shorted);
  std::stringstream ss;
  write_fault_csv(ss, chip.faults());
  EXPECT_EQ(ss.str(), "kernel,row,col,fault\n1,2,3,Shorted\n");
}
