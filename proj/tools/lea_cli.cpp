// lea: command-line driver for the layer-ensemble experiments.
//
// Exit codes: 0 success, 1 acceptance violation or runtime failure,
// 2 invalid input.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "lea/errors.hpp"
#include "lea/harness.hpp"

namespace fs = std::filesystem;
using namespace lea;
using harness::ExperimentConfig;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : harness::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.threads > 0) cfg.threads = g.threads;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

int report_checks(const std::vector<harness::Check>& checks) {
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

std::ofstream out_file(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write " + p.string());
  os.precision(17);
  return os;
}

fs::path or_default(const std::string& given, const ExperimentConfig& cfg, const char* name) {
  return given.empty() ? cfg.out_dir / name : fs::path(given);
}

chip::NoiseConfig preset(const std::string& name, std::uint64_t seed) {
  if (name == "ideal") return chip::NoiseConfig::ideal(seed);
  if (name == "defaults") return chip::NoiseConfig::defaults(seed);
  if (name == "hardware_like") return chip::NoiseConfig::hardware_like(seed);
  throw InvalidInput("unknown noise preset '" + name + "'");
}

void write_sweep(const harness::SweepResult& r, const fs::path& p) {
  auto os = out_file(p);
  harness::write_sweep_csv(os, r);
  std::cout << "wrote " << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer ensemble averaging on a simulated memristive crossbar"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for repeats")->check(CLI::PositiveNumber);

  std::string solution_path, chip_path, mapping_path, calib_path;
  std::string noise_preset = "hardware_like", fault_mode = "StuckHigh";
  double fault_rate = 0.0, g_norm = 1.0;
  std::uint64_t fault_seed = 1;
  std::size_t beta = 1;
  bool noiseless = false, ideal = false, allow_degraded = false;
  std::string dir;

  auto* gen = app.add_subcommand("gen-data", "Write the multi-task Yin-Yang splits as CSV");
  auto* train = app.add_subcommand("train", "Train SGD and EWC networks and select a solution");
  auto* quant = app.add_subcommand("quantize", "Re-ternarize the float weights of a solution");
  quant->add_option("--solution", solution_path, "Solution JSON (default <out>/solution.json)");

  auto* chipc = app.add_subcommand("chip", "Create a chip state with injected faults");
  chipc->add_option("--preset", noise_preset, "ideal | defaults | hardware_like");
  chipc->add_flag("--ideal", ideal, "Noise-free devices");
  chipc->add_option("--fault-rate", fault_rate, "Stuck fraction per kernel")
      ->check(CLI::Range(0.0, 1.0));
  chipc->add_option("--fault-mode", fault_mode, "StuckHigh | StuckLow | Shorted");
  chipc->add_option("--fault-seed", fault_seed, "Fault placement seed");

  auto* mapc = app.add_subcommand("map", "Plan, write and calibrate a solution on a chip");
  mapc->add_option("--chip", chip_path, "Chip JSON (default <out>/chip.json)");
  mapc->add_option("--solution", solution_path, "Solution JSON");
  mapc->add_option("--beta", beta, "Clean copies per output")->check(CLI::PositiveNumber);
  mapc->add_option("--g-norm", g_norm, "Decode scale")->check(CLI::PositiveNumber);

  auto* infer = app.add_subcommand("infer", "Run test-set inference on a mapped chip");
  infer->add_option("--chip", chip_path, "Programmed chip JSON (default <out>/chip_mapped.json)");
  infer->add_option("--solution", solution_path, "Solution JSON");
  infer->add_option("--mapping", mapping_path, "Mapping JSON (default <out>/mapping.json)");
  infer->add_option("--calibration", calib_path, "Calibration JSON");
  infer->add_option("--g-norm", g_norm, "Override decode scale")->check(CLI::PositiveNumber);
  infer->add_flag("--allow-degraded", allow_degraded, "Infer even if beta is not satisfied");

  auto* sd = app.add_subcommand("sweep-defects", "Fault-rate sweep on ideal devices");
  auto* sb = app.add_subcommand("sweep-beta", "beta sweep on a noisy faulted chip");
  auto* sg = app.add_subcommand("sweep-gnorm", "G_norm sweep");
  for (auto* s : {sd, sb, sg}) s->add_option("--solution", solution_path, "Solution JSON");
  auto* vv = app.add_subcommand("validate-vmm", "Random 4-level kernel write and VMM check");
  vv->add_flag("--noiseless", noiseless, "Ideal devices and reads");
  auto* rep = app.add_subcommand("report", "Figure CSVs and pass/fail summary");
  rep->add_option("--dir", dir, "Results directory (default <out>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = resolve(g);
    auto load_sol = [&] {
      return harness::load_solution(or_default(solution_path, cfg, "solution.json"));
    };

    if (gen->parsed()) {
      auto data = harness::make_dataset(cfg);
      const std::pair<const char*, const std::vector<taskgen::Sample>*> files[] = {
          {"task1_train.csv", &data.train_task1}, {"task1_test.csv", &data.test_task1},
          {"task2_train.csv", &data.train_task2}, {"task2_test.csv", &data.test_task2}};
      for (auto [name, samples] : files) {
        auto os = out_file(cfg.out_dir / name);
        taskgen::write_csv(os, *samples);
      }
      std::cout << "wrote 4 splits to " << cfg.out_dir.string() << '\n';
      return 0;
    }

    if (train->parsed()) {
      auto data = harness::make_dataset(cfg);
      auto t = harness::run_training(cfg, data);
      harness::write_training_outputs(t, cfg);
      std::cout << "linear baseline " << t.linear_baseline[0] << " / " << t.linear_baseline[1]
                << ", selected seed " << t.chosen().seed << '\n';
      return report_checks(harness::check_training(t));
    }

    if (quant->parsed()) {
      auto s = load_sol();
      s.ternary = nn::ternarize(s.network);
      nn::score_solution(s.ternary, harness::make_dataset(cfg));
      auto p = cfg.out_dir / "quantized.json";
      harness::save_solution(p, s);
      std::cout << "ternary accuracy " << s.ternary.accuracy[0] << " / " << s.ternary.accuracy[1]
                << ", wrote " << p.string() << '\n';
      bool ok = s.ternary.accuracy[0] > s.linear_baseline[0] &&
                s.ternary.accuracy[1] > s.linear_baseline[1];
      return ok ? 0 : 1;
    }

    if (chipc->parsed()) {
      chip::SimChip c(preset(noise_preset, cfg.seed), ideal || noise_preset == "ideal");
      c.inject_faults(fault_rate, chip::parse_fault(fault_mode), fault_seed);
      c.save((cfg.out_dir / "chip.json").string());
      auto os = out_file(cfg.out_dir / "faults.csv");
      chip::write_fault_csv(os, c.faults());
      std::cout << c.faults().count() << " faulted devices, wrote chip.json and faults.csv\n";
      return 0;
    }

    if (mapc->parsed()) {
      auto c = chip::SimChip::load(or_default(chip_path, cfg, "chip.json").string());
      auto s = load_sol();
      ensemble::DeployReport dr;
      auto net = ensemble::deploy(c, s.ternary, beta, cfg.theta, g_norm, &dr);
      c.save((cfg.out_dir / "chip_mapped.json").string());
      {
        auto os = out_file(cfg.out_dir / "mapping.json");
        ensemble::save_mappings(os, net.mappings);
      }
      {
        auto os = out_file(cfg.out_dir / "calibration.json");
        ensemble::save_calibration(os, net.calibration);
      }
      auto st = ensemble::ensemble_stats(net.mappings);
      for (std::size_t l = 0; l < st.alpha.size(); ++l)
        std::cout << "layer " << l + 1 << ": alpha " << st.alpha[l][0] << "/" << st.alpha[l][1]
                  << (net.mappings[l].success ? "" : "  (beta not satisfied)") << '\n';
      std::cout << st.total_devices << " devices\n";
      return net.all_successful() ? 0 : 1;
    }

    if (infer->parsed()) {
      auto c = chip::SimChip::load(or_default(chip_path, cfg, "chip_mapped.json").string());
      ensemble::EnsembleNetwork net;
      net.solution = load_sol().ternary;
      net.v_read = c.levels().v_read;
      {
        std::ifstream is(or_default(mapping_path, cfg, "mapping.json"));
        if (!is) throw InvalidInput("cannot open mapping file");
        net.mappings = ensemble::load_mappings(is);
      }
      {
        std::ifstream is(or_default(calib_path, cfg, "calibration.json"));
        if (!is) throw InvalidInput("cannot open calibration file");
        net.calibration = ensemble::load_calibration(is);
      }
      if (infer->count("--g-norm")) net.set_g_norm(g_norm);
      auto acc = harness::evaluate_ensemble(c, net, harness::make_dataset(cfg), allow_degraded);
      std::cout << "task1 " << acc.task1 << " task2 " << acc.task2 << " mean " << acc.mean()
                << '\n';
      return 0;
    }

    if (sd->parsed() || sb->parsed() || sg->parsed()) {
      auto s = load_sol();
      auto data = harness::make_dataset(cfg);
      harness::Accuracy sw{s.ternary.accuracy[0], s.ternary.accuracy[1]};
      std::vector<harness::Check> checks;
      if (sd->parsed()) {
        auto r = harness::defect_sweep(cfg, s.ternary, data);
        write_sweep(r, cfg.out_dir / "defect_sweep.csv");
        checks = harness::check_defect_sweep(
            r, sw, 0.5 * (s.linear_baseline[0] + s.linear_baseline[1]));
        checks.push_back(harness::check_ensemble_scaling(r));
      } else if (sb->parsed()) {
        auto r = harness::beta_sweep(cfg, s.ternary, data);
        write_sweep(r, cfg.out_dir / "beta_sweep.csv");
        checks = harness::check_beta_sweep(r, sw);
      } else {
        auto r = harness::gnorm_sweep(cfg, s.ternary, data);
        write_sweep(r, cfg.out_dir / "gnorm_sweep.csv");
        checks = harness::check_gnorm_sweep(r, s.linear_baseline);
      }
      return report_checks(checks);
    }

    if (vv->parsed()) {
      auto r = harness::vmm_validate(cfg, noiseless);
      auto p = cfg.out_dir / (noiseless ? "vmm_validate_noiseless.csv" : "vmm_validate.csv");
      auto os = out_file(p);
      harness::write_vmm_csv(os, r);
      std::cout << "wrote " << p.string() << " (" << r.devices_failed << " of "
                << r.devices_programmed << " devices failed to program)\n";
      return report_checks(harness::check_vmm(r, noiseless));
    }

    if (rep->parsed()) {
      auto r = harness::build_report(dir.empty() ? cfg.out_dir : fs::path(dir));
      for (const auto& f : r.written) std::cout << "wrote " << f << '\n';
      for (const auto& m : r.missing) std::cout << "MISSING " << m << '\n';
      return report_checks(r.checks);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
