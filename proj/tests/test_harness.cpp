#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lea/errors.hpp"
#include "lea/harness.hpp"

using namespace lea;
using namespace lea::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lea_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.dataset = {200, 150, 7};
  cfg.fault_rates = {0.0, 0.2, 0.4};
  cfg.betas = {1, 2};
  cfg.repeats = 3;
  cfg.gnorm_grid = {0.5, 1.0, 2.0};
  return cfg;
}

nn::TernarySolution quick_solution(const taskgen::MultiTaskDataset& d) {
  auto sol = nn::ternarize(nn::init_network(3));
  nn::score_solution(sol, d);
  return sol;
}

SweepRow row(double x, bool ok, double t1, double t2, std::size_t repeat = 0,
             std::string variant = "ensemble") {
  SweepRow r;
  r.variant = std::move(variant);
  r.x = x;
  r.repeat = repeat;
  r.mapping_success = ok;
  r.alpha = {{1, 1}, {1, 1}, {1, 1}};
  r.devices = 276;
  r.acc = {t1, t2};
  return r;
}

const Check& find(const std::vector<Check>& v, const std::string& name) {
  for (const auto& c : v)
    if (c.name == name) return c;
  throw std::runtime_error("no check " + name);
}

}  // namespace

TEST(Config, JsonRoundTripAndHash) {
  auto cfg = small_config();
  cfg.noise.adc_bits.reset();
  cfg.fault_mode = chip::Fault::Shorted;
  auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  auto other = cfg;
  other.out_dir = "elsewhere";
  other.threads = 4;
  EXPECT_EQ(config_hash(other), config_hash(cfg));
  other.repeats = 4;
  EXPECT_NE(config_hash(other), config_hash(cfg));
}

TEST(Config, PartialAndPresetKeys) {
  auto cfg = config_from_json(nlohmann::json::parse(R"({"repeats": 5, "noise_preset": "ideal"})"));
  EXPECT_EQ(cfg.repeats, 5u);
  EXPECT_EQ(cfg.noise.prog_sigma, 0.0);
  EXPECT_EQ(cfg.betas, ExperimentConfig{}.betas);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"repeatz": 5})")), InvalidInput);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"repeats": "five"})")), InvalidInput);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"repeats": 0})")), InvalidInput);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"fault_rates": [1.5]})")), InvalidInput);
  EXPECT_THROW(load_config("/nonexistent/cfg.json"), InvalidInput);
}

TEST(Config, DefaultGnormGrid) {
  auto g = default_gnorm_grid();
  ASSERT_EQ(g.size(), 9u);
  EXPECT_DOUBLE_EQ(g.front(), 0.25);
  EXPECT_DOUBLE_EQ(g[4], 1.0);
  EXPECT_DOUBLE_EQ(g.back(), 4.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::sqrt(2.0), 1e-12);
}

TEST(SweepCsv, RoundTrip) {
  SweepResult r{"beta", "beta", "abc123", tool_version(), {}};
  r.rows.push_back(row(1, true, 0.7, 0.65));
  r.rows.push_back(row(2, false, 0.5, 0.25, 1));
  r.rows.back().alpha = {{3, 2}, {1, 4}, {2, 2}};
  r.rows.back().degraded = true;
  r.rows.push_back(row(1, true, 0.7, 0.7, 0, "ideal"));
  std::stringstream ss;
  write_sweep_csv(ss, r);
  auto back = read_sweep_csv(ss);
  EXPECT_EQ(back.name, "beta");
  EXPECT_EQ(back.config_hash, "abc123");
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[1].alpha, r.rows[1].alpha);
  EXPECT_TRUE(back.rows[1].degraded);
  EXPECT_EQ(back.rows[1].acc.task2, 0.25);
  EXPECT_EQ(back.rows[2].variant, "ideal");
  std::stringstream bad("x,y\n");
  EXPECT_THROW(read_sweep_csv(bad), InvalidInput);
}

TEST(Summaries, MeanStdAndSuccess) {
  SweepResult r;
  r.rows = {row(0.1, true, 0.6, 0.8), row(0.1, false, 0.4, 0.6, 1), row(0.2, true, 1, 1)};
  auto s = r.summarize();
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].mean, 0.6);
  EXPECT_DOUBLE_EQ(s[0].success_rate, 0.5);
  EXPECT_NEAR(s[0].std, std::sqrt(0.02), 1e-12);  // sample std of {0.7, 0.5}
  EXPECT_EQ(s[1].n, 1u);
}

TEST(Checks, DefectSweep) {
  Accuracy sw{0.75, 0.7};
  SweepResult r;
  for (double x : {0.0, 0.3, 0.35})
    for (std::size_t k = 0; k < 10; ++k) r.rows.push_back(row(x, true, 0.75, 0.7, k));
  for (std::size_t k = 0; k < 10; ++k) r.rows.push_back(row(0.4, k > 2, k > 2 ? 0.75 : 0.5, 0.7, k));
  auto c = check_defect_sweep(r, sw, 0.66);
  EXPECT_TRUE(find(c, "mapping_success").pass);
  EXPECT_TRUE(find(c, "mapped_accuracy_exact").pass);
  EXPECT_TRUE(find(c, "top_rate_failures").pass);

  r.rows[3].acc.task1 = 0.7499;
  EXPECT_FALSE(find(check_defect_sweep(r, sw, 0.66), "mapped_accuracy_exact").pass);
  r.rows[3].acc.task1 = 0.75;
  r.rows[3].mapping_success = false;
  EXPECT_FALSE(find(check_defect_sweep(r, sw, 0.66), "mapping_success").pass);
  r.rows[3].mapping_success = true;
  // Failed repeats averaging above the baseline.
  EXPECT_FALSE(find(check_defect_sweep(r, sw, 0.55), "top_rate_failures").pass);
}

TEST(Checks, EnsembleScaling) {
  SweepResult r;
  for (double x : {0.0, 0.1, 0.2}) {
    auto a = row(x, true, 1, 1);
    a.devices = 276 + static_cast<std::size_t>(x * 1000);
    r.rows.push_back(a);
  }
  EXPECT_TRUE(check_ensemble_scaling(r).pass);
  r.rows[2].devices = 200;
  EXPECT_FALSE(check_ensemble_scaling(r).pass);
  r.rows[2].devices = 370;  // one small inversion
  EXPECT_TRUE(check_ensemble_scaling(r).pass);
}

TEST(Checks, BetaSweep) {
  Accuracy sw{0.74, 0.72};
  SweepResult r;
  const double means[] = {0.66, 0.70, 0.72, 0.719};
  for (std::size_t b = 1; b <= 4; ++b)
    for (std::size_t k = 0; k < 4; ++k) {
      double d = (k % 2 ? 0.01 : -0.01);
      r.rows.push_back(row(double(b), true, means[b - 1] + d, means[b - 1] + d, k));
    }
  r.rows.push_back(row(1, true, 0.74, 0.72, 0, "ideal"));
  auto c = check_beta_sweep(r, sw);
  for (const auto& x : c) EXPECT_TRUE(x.pass) << x.name << " " << x.detail;
  for (auto& x : r.rows)
    if (x.variant == "ensemble" && x.x == 3.0) x.acc = {0.69, 0.69};
  EXPECT_FALSE(find(check_beta_sweep(r, sw), "beta3_near_software").pass);
}

TEST(Checks, Vmm) {
  VmmReport v;
  v.points = {{0, 0}, {10, 10}};
  v.slope = 1.0;
  v.r2 = 1.0;
  v.max_rel_error = 1e-15;
  for (const auto& c : check_vmm(v, true)) EXPECT_TRUE(c.pass);
  v.max_rel_error = 1e-9;
  bool any_fail = false;
  for (const auto& c : check_vmm(v, true)) any_fail |= !c.pass;
  EXPECT_TRUE(any_fail);
  v.slope = 1.02;
  any_fail = false;
  for (const auto& c : check_vmm(v, false)) any_fail |= !c.pass;
  EXPECT_TRUE(any_fail);
}

TEST(Solution, RoundTrip) {
  auto d = taskgen::make_multitask_dataset(100, 100, 1);
  SolutionFile s;
  s.network = nn::init_network(4);
  s.ternary = quick_solution(d);
  s.ewc = {s.network.weights, s.network.weights, 5.0};
  s.float_accuracy = {0.8, 0.7};
  s.linear_baseline = {0.6, 0.62};
  s.seed = 4;
  s.dataset_seed = 1;
  std::stringstream ss;
  save_solution(ss, s);
  auto back = load_solution(ss);
  EXPECT_EQ(back.network.weights, s.network.weights);
  EXPECT_EQ(back.ternary.ternary, s.ternary.ternary);
  EXPECT_EQ(back.ternary.scales, s.ternary.scales);
  EXPECT_EQ(back.ternary.accuracy, s.ternary.accuracy);
  EXPECT_EQ(back.ewc.lambda, 5.0);
  EXPECT_EQ(back.linear_baseline, s.linear_baseline);
  EXPECT_EQ(back.seed, 4u);

  std::stringstream again;
  save_solution(again, s);
  auto j = nlohmann::json::parse(again.str());
  j["ternary"][0][0][0] = 2;
  std::stringstream bad(j.dump());
  EXPECT_THROW(load_solution(bad), InvalidInput);
}

TEST(Sweeps, SerialEqualsParallel) {
  auto cfg = small_config();
  auto d = make_dataset(cfg);
  auto sol = quick_solution(d);
  auto a = defect_sweep(cfg, sol, d);
  cfg.threads = 3;
  auto b = defect_sweep(cfg, sol, d);
  std::stringstream sa, sb;
  write_sweep_csv(sa, a);
  write_sweep_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());

  cfg.threads = 1;
  auto c = beta_sweep(cfg, sol, d);
  cfg.threads = 2;
  auto e = beta_sweep(cfg, sol, d);
  std::stringstream sc, se;
  write_sweep_csv(sc, c);
  write_sweep_csv(se, e);
  EXPECT_EQ(sc.str(), se.str());
}

TEST(Sweeps, DefectRowsAreExactWhenMapped) {
  auto cfg = small_config();
  auto d = make_dataset(cfg);
  auto sol = quick_solution(d);
  auto r = defect_sweep(cfg, sol, d);
  EXPECT_EQ(r.rows.size(), cfg.fault_rates.size() * cfg.repeats);
  for (const auto& x : r.rows)
    if (x.mapping_success) {
      EXPECT_EQ(x.acc.task1, sol.accuracy[0]);
      EXPECT_EQ(x.acc.task2, sol.accuracy[1]);
    }
}

TEST(Vmm, NoiselessIsExact) {
  auto cfg = small_config();
  cfg.vmm_vectors = 10;
  cfg.vmm_repeats = 2;
  auto v = vmm_validate(cfg, true);
  EXPECT_EQ(v.points.size(), 10u * 25);
  EXPECT_LE(v.max_rel_error, 1e-12);
  std::stringstream ss;
  write_vmm_csv(ss, v);
  auto back = read_vmm_csv(ss);
  EXPECT_EQ(back.points, v.points);
}

TEST(Report, MissingInputsAndIdempotence) {
  auto dir = scratch_dir("report");
  auto rep = build_report(dir);
  EXPECT_FALSE(rep.missing.empty());
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));

  auto cfg = small_config();
  auto d = make_dataset(cfg);
  auto r = defect_sweep(cfg, quick_solution(d), d);
  {
    std::ofstream os(dir / "defect_sweep.csv");
    write_sweep_csv(os, r);
  }
  auto first = build_report(dir);
  auto read = [&](const char* f) {
    std::ifstream is(dir / f);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  auto fig5c = read("fig5c.csv"), summary = read("summary.txt");
  EXPECT_TRUE(std::find(first.written.begin(), first.written.end(), "fig5c.csv") != first.written.end());
  build_report(dir);
  EXPECT_EQ(read("fig5c.csv"), fig5c);
  EXPECT_EQ(read("summary.txt"), summary);
  EXPECT_THROW(build_report(dir / "nope"), InvalidInput);
  fs::remove_all(dir);
}
