#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lea/ensemble.hpp"
#include "lea/errors.hpp"
#include "support/properties.hpp"

using namespace lea;
using namespace lea::ensemble;
using chip::ChipGeometry;
using chip::Fault;
using chip::FaultMap;
using chip::NoiseConfig;
using chip::SimChip;

namespace {

nn::TernarySolution random_solution(std::uint64_t seed) {
  Rng rng(seed);
  nn::TernarySolution s;
  for (auto [in, out] : nn::kLayerDims) {
    IntMatrix t(in, out);
    for (auto& v : t.data()) v = static_cast<int>(uniform_index(rng, 3)) - 1;
    t(0, 0) = 1;
    t(1, 0) = -1;
    s.ternary.push_back(t);
    s.scales.push_back(uniform(rng, 0.2, 1.5));
  }
  return s;
}

// One 2x2 copy fits per kernel. Kernel 0 has output 1 dirty, kernel 1 is clean,
// kernel 2 has output 2 dirty.
FaultMap fig2_faults(std::size_t n_kernels) {
  FaultMap f(ChipGeometry{n_kernels, 2, 2});
  f.set(0, 0, 1, Fault::StuckHigh);
  f.set(2, 1, 0, Fault::StuckLow);
  return f;
}

}  // namespace

TEST(Encode, Examples) {
  IntMatrix t(2, 3);
  t(0, 0) = 1;
  t(1, 0) = -1;
  t(0, 2) = -1;
  auto e = encode_differential(t);
  ASSERT_EQ(e.g_pos.rows(), 3u);
  ASSERT_EQ(e.g_pos.cols(), 2u);
  EXPECT_EQ(e.g_pos(0, 0), 233.0);
  EXPECT_EQ(e.g_neg(0, 0), 133.0);
  EXPECT_EQ(e.g_pos(1, 0), 233.0);
  EXPECT_EQ(e.g_neg(1, 0), 233.0);
  EXPECT_EQ(e.g_pos(0, 1), 133.0);
  EXPECT_EQ(e.g_neg(0, 1), 233.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t o = 0; o < 3; ++o)
      EXPECT_EQ((e.g_pos(o, i) - e.g_neg(o, i)) / 100.0, t(i, o));
  t(1, 1) = 2;
  EXPECT_THROW(encode_differential(t), InvalidInput);
}

TEST(Planner, CleanChipBetaOne) {
  FaultMap f{ChipGeometry{}};
  auto m = find_layer_ensemble(f, {12, 4}, 1);
  EXPECT_TRUE(m.success);
  for (auto p : kPolarities) {
    EXPECT_EQ(m.at(p).alpha(), 1u);
    for (auto v : m.at(p).clean_mask.data()) EXPECT_EQ(v, 1);
  }
  EXPECT_EQ(m.at(Polarity::Pos).placements[0].kernel_id, 0u);
  EXPECT_EQ(m.at(Polarity::Pos).placements[0].row_offset, 0u);
}

TEST(Planner, AllFaultyFails) {
  chip::SimChip c(NoiseConfig::ideal(), true);
  c.inject_faults(1.0, Fault::StuckHigh, 1);
  auto m = find_layer_ensemble(c.faults(), {6, 12}, 1);
  EXPECT_FALSE(m.success);
  for (auto p : kPolarities)
    for (auto n : m.at(p).clean_counts) EXPECT_EQ(n, 0u);
}

TEST(Planner, TooLargeLayerThrows) {
  FaultMap f{ChipGeometry{}};
  EXPECT_THROW(find_layer_ensemble(f, {26, 4}, 1), InvalidInput);
  EXPECT_THROW(find_layer_ensemble(f, {2, 2}, 0), InvalidInput);
}

TEST(Planner, FigureTwoPattern) {
  auto m = find_layer_ensemble(fig2_faults(3), {2, 2}, 2);
  const auto& pe = m.at(Polarity::Pos);
  ASSERT_EQ(pe.alpha(), 3u);
  // Clean copy first, then the copies that each supply one missing output.
  EXPECT_EQ(pe.placements[0].kernel_id, 1u);
  EXPECT_EQ(pe.placements[1].kernel_id, 0u);
  EXPECT_EQ(pe.placements[2].kernel_id, 2u);
  EXPECT_EQ(pe.clean_mask(0, 0), 1);
  EXPECT_EQ(pe.clean_mask(0, 1), 1);
  EXPECT_EQ(pe.clean_mask(1, 0), 0);
  EXPECT_EQ(pe.clean_mask(1, 1), 1);
  EXPECT_EQ(pe.clean_mask(2, 0), 1);
  EXPECT_EQ(pe.clean_mask(2, 1), 0);
  EXPECT_EQ(pe.clean_counts, (std::vector<std::size_t>{2, 2}));
  // No room left for G_neg.
  EXPECT_EQ(m.at(Polarity::Neg).alpha(), 0u);
  EXPECT_FALSE(m.success);
}

TEST(Vmm, FigureTwoAveraging) {
  // Six kernels; G_pos on 0-2 and G_neg on 3-5, both with the figure pattern.
  SimChip c(NoiseConfig::ideal(), false, ChipGeometry{6, 2, 2});
  auto pos_faults = fig2_faults(6);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t col = 0; col < 2; ++col)
        if (pos_faults.faulty(k, r, col)) {
          c.set_fault({k, r, col}, pos_faults.at(k, r, col));
          c.set_fault({k + 3, r, col}, pos_faults.at(k, r, col));
        }
  std::vector<chip::Region> upper{{3, 0, 0, 2, 2}, {4, 0, 0, 2, 2}, {5, 0, 0, 2, 2}};
  std::vector<chip::Region> lower{{0, 0, 0, 2, 2}, {1, 0, 0, 2, 2}, {2, 0, 0, 2, 2}};
  auto m = find_layer_ensemble(c.faults(), {2, 2}, 2, upper);
  auto neg = find_layer_ensemble(c.faults(), {2, 2}, 2, lower);
  m.at(Polarity::Neg) = neg.at(Polarity::Pos);
  for (auto& p : m.at(Polarity::Neg).placements) p.polarity = Polarity::Neg;
  m.success = m.beta_satisfied();
  ASSERT_TRUE(m.success);

  IntMatrix t(2, 2);
  t(0, 0) = 1;
  t(1, 0) = -1;
  t(0, 1) = 0;
  t(1, 1) = 1;
  auto rep = write_ensemble(c, m, t);
  EXPECT_TRUE(rep.demotions.empty());

  std::vector<double> x{0.8, -0.3};
  auto i = ensemble_vmm(c, m, x);
  auto copy_current = [&](std::size_t kernel, std::size_t out) {
    double s = 0;
    for (std::size_t col = 0; col < 2; ++col) s += c.conductance({kernel, out, col}) * 0.3 * x[col];
    return s;
  };
  // Pos copies by index: kernel 1 (clean), kernel 0, kernel 2.
  EXPECT_NEAR(i.i_pos[0], (copy_current(1, 0) + copy_current(2, 0)) / 2, 1e-12);
  EXPECT_NEAR(i.i_pos[1], (copy_current(1, 1) + copy_current(0, 1)) / 2, 1e-12);
  EXPECT_NEAR(i.i_neg[0], (copy_current(4, 0) + copy_current(5, 0)) / 2, 1e-12);
  EXPECT_NEAR(i.i_neg[1], (copy_current(4, 1) + copy_current(3, 1)) / 2, 1e-12);
  EXPECT_FALSE(i.degraded);
}

TEST(Vmm, RefusesUnsuccessfulUnlessDegraded) {
  SimChip c(NoiseConfig::ideal(), false, ChipGeometry{3, 2, 2});
  c.set_fault({0, 0, 1}, Fault::StuckHigh);
  c.set_fault({2, 1, 0}, Fault::StuckLow);
  auto m = find_layer_ensemble(c.faults(), {2, 2}, 2);
  ASSERT_FALSE(m.success);
  std::vector<double> x{0.5, 0.5};
  EXPECT_THROW(ensemble_vmm(c, m, x), RuntimeFailure);
  auto i = ensemble_vmm(c, m, x, true);
  EXPECT_TRUE(i.degraded);
  EXPECT_THROW(ensemble_vmm(c, m, std::vector<double>{0.5, 1.5}, true), InvalidInput);
}

TEST(Write, DemotesRowsThatFailAfterPlanning) {
  SimChip c(NoiseConfig::ideal(), true);
  auto sol = random_solution(1);
  auto m = find_layer_ensemble(c.faults(), hardware_shape(sol.ternary[0]), 1);
  const auto& p = m.at(Polarity::Neg).placements[0];
  c.set_fault({p.kernel_id, p.row_offset + 5, p.col_offset + 2}, Fault::StuckHigh);
  auto rep = write_ensemble(c, m, sol.ternary[0]);
  ASSERT_EQ(rep.demotions.size(), 1u);
  EXPECT_EQ(rep.demotions[0].polarity, Polarity::Neg);
  EXPECT_EQ(rep.demotions[0].copy_index, 0u);
  EXPECT_EQ(rep.demotions[0].output, 5u);
  EXPECT_EQ(rep.devices_failed, 1u);
  EXPECT_FALSE(rep.beta_holds);
  EXPECT_FALSE(m.success);
}

TEST(Write, NoDemotionsWhenFaultsMatchPlanning) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    SimChip c(NoiseConfig::hardware_like(s));
    c.inject_faults(0.1, Fault::StuckHigh, 100 + s);
    auto sol = random_solution(s);
    DeployReport rep;
    auto net = deploy(c, sol, 2, chip::kDefaultTheta, 1.0, &rep);
    ASSERT_TRUE(rep.planning_success);
    for (const auto& w : rep.writes) {
      EXPECT_TRUE(w.demotions.empty());
      EXPECT_TRUE(w.beta_holds);
    }
    // Replanning the same bitmap gives the same masks.
    auto again = plan_network(c.faults(), sol, 2);
    for (std::size_t l = 0; l < 3; ++l)
      for (auto p : kPolarities)
        EXPECT_EQ(again[l].at(p).clean_mask, net.mappings[l].at(p).clean_mask);
  }
}

TEST(Decode, Examples) {
  CalibrationInfo cal{100.0, 1.0};
  auto one = decode_output(std::vector<double>{233 * 0.3}, std::vector<double>{133 * 0.3}, cal, 0.3);
  EXPECT_NEAR(one[0], 1.0, 1e-12);
  auto zero = decode_output(std::vector<double>{57.0}, std::vector<double>{57.0}, cal, 0.3);
  EXPECT_EQ(zero[0], 0.0);
  auto a = decode_output(std::vector<double>{40.0}, std::vector<double>{10.0}, cal, 0.3, 0.7);
  auto b = decode_output(std::vector<double>{120.0}, std::vector<double>{30.0}, cal, 0.3, 0.7);
  EXPECT_NEAR(b[0], 3 * a[0], 1e-12);
  EXPECT_THROW(decode_output(std::vector<double>{NAN}, std::vector<double>{1.0}, cal, 0.3),
               InvalidInput);
  EXPECT_THROW(decode_output(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, cal, 0.3),
               InvalidInput);
}

TEST(GDiff, IdealIsExactlyOneHundred) {
  SimChip c(NoiseConfig::ideal(), true);
  auto sol = random_solution(2);
  auto net = deploy(c, sol, 1);
  for (const auto& cal : net.calibration) EXPECT_EQ(cal.g_diff_mean, 100.0);
}

TEST(GDiff, NoisyWithinStatisticalBound) {
  double err = 0;
  std::size_t n = 0;
  const int chips = 50;
  for (int s = 0; s < chips; ++s) {
    SimChip c(NoiseConfig::defaults(s));
    auto sol = random_solution(3);
    auto m = find_layer_ensemble(c.faults(), hardware_shape(sol.ternary[0]), 1);
    write_ensemble(c, m, sol.ternary[0]);
    err += std::abs(measure_g_diff(c, m, encode_differential(sol.ternary[0])) - 100.0);
    n = m.device_count();
  }
  EXPECT_LE(err / chips, chip::kDefaultTheta / std::sqrt(double(n)));
}

TEST(GDiff, AllOnTargetsThrow) {
  SimChip c(NoiseConfig::ideal(), true);
  IntMatrix zeros(4, 3);
  auto m = find_layer_ensemble(c.faults(), hardware_shape(zeros), 1);
  write_ensemble(c, m, zeros);
  EXPECT_THROW(measure_g_diff(c, m, encode_differential(zeros)), RuntimeFailure);
}

TEST(Forward, IdealMatchesSoftwareTernary) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    SimChip c(NoiseConfig::ideal(), true);
    auto sol = random_solution(10 + s);
    auto net = deploy(c, sol, 1 + s % 3);
    auto sw = sol.to_network();
    Rng rng(s);
    for (int t = 0; t < 50; ++t) {
      std::array<double, 4> f;
      for (auto& v : f) v = uniform(rng, 0, 2);
      auto hw = ensemble_forward(c, net, f).probabilities;
      auto ref = nn::forward(sw, f).probabilities;
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(hw[k], ref[k], 1e-9);
    }
  }
}

TEST(Forward, GNormScalesPreactivations) {
  SimChip c(NoiseConfig::ideal(), true);
  auto sol = random_solution(4);
  auto net = deploy(c, sol, 1);
  std::array<double, 4> f{0.3, 0.9, 0.7, 0.1};
  auto base = ensemble_forward(c, net, f).decoded[0];
  net.set_g_norm(2.0);
  auto half = ensemble_forward(c, net, f).decoded[0];
  for (std::size_t j = 0; j < base.size(); ++j) EXPECT_NEAR(half[j], base[j] / 2, 1e-12);
}

TEST(Stats, DeviceCountsAndAlpha) {
  FaultMap clean{ChipGeometry{}};
  auto sol = random_solution(5);
  auto m = plan_network(clean, sol, 1);
  auto st = ensemble_stats(m);
  EXPECT_EQ(st.total_devices, 276u);
  for (const auto& a : st.alpha) EXPECT_EQ(a, (std::array<std::size_t, 2>{1, 1}));

  SimChip c(NoiseConfig::ideal(), true);
  c.inject_faults(0.15, Fault::StuckHigh, 8);
  std::size_t prev = 0;
  for (std::size_t beta = 1; beta <= 4; ++beta) {
    auto mm = plan_network(c.faults(), sol, beta);
    std::size_t total = 0;
    for (const auto& a : ensemble_stats(mm).alpha) total += a[0] + a[1];
    EXPECT_GE(total, prev);
    prev = total;
  }
}

TEST(Persistence, MappingsAndCalibrationRoundTrip) {
  SimChip c(NoiseConfig::defaults(3));
  c.inject_faults(0.1, Fault::StuckHigh, 3);
  auto net = deploy(c, random_solution(6), 2);
  std::stringstream ms, cs;
  save_mappings(ms, net.mappings);
  save_calibration(cs, net.calibration);
  auto m = load_mappings(ms);
  auto cal = load_calibration(cs);
  ASSERT_EQ(m.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(m[l].success, net.mappings[l].success);
    EXPECT_EQ(m[l].beta, 2u);
    for (auto p : kPolarities) {
      EXPECT_EQ(m[l].at(p).clean_mask, net.mappings[l].at(p).clean_mask);
      EXPECT_EQ(m[l].at(p).clean_counts, net.mappings[l].at(p).clean_counts);
      EXPECT_EQ(m[l].at(p).alpha(), net.mappings[l].at(p).alpha());
    }
    EXPECT_EQ(cal[l].g_diff_mean, net.calibration[l].g_diff_mean);
  }
  std::stringstream bad("[{\"layer_id\": 0}]");
  EXPECT_THROW(load_mappings(bad), InvalidInput);
}

TEST(Properties, MappingLegality) {
  auto r = lea::testing::mapping_legality_fuzz(1000, 2);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Properties, MaskSoundness) {
  auto r = lea::testing::mask_soundness(50, 3);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Properties, StuckValueIndependence) {
  auto r = lea::testing::stuck_value_independence(5, 4);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Properties, VarianceReduction) {
  auto r = lea::testing::variance_reduction(1000, 5);
  EXPECT_TRUE(r.pass) << r.detail;
}
