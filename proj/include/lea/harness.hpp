#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lea/chipsim.hpp"
#include "lea/ensemble.hpp"
#include "lea/neuralnet.hpp"
#include "lea/taskgen.hpp"

namespace lea::harness {

std::string tool_version();

struct DatasetParams {
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 42;
};

struct TrainingParams {
  nn::Hyperparameters hp;
  std::size_t n_seeds = 20;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;  // training seeds are seed .. seed + n_seeds - 1
  DatasetParams dataset;
  TrainingParams training;
  chip::NoiseConfig noise = chip::NoiseConfig::hardware_like();
  double theta = chip::kDefaultTheta;
  std::vector<double> fault_rates{0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40};
  chip::Fault fault_mode = chip::Fault::StuckHigh;
  std::vector<std::size_t> betas{1, 2, 3, 4};
  /// Stuck-device fraction of the fixed fault map used by the beta and
  /// G_norm sweeps; 0.0432 gives 27 stuck devices per kernel.
  double hw_fault_rate = 0.0432;
  std::size_t gnorm_beta = 3;
  std::vector<double> gnorm_grid;  // empty -> default_gnorm_grid()
  std::size_t repeats = 20;
  std::size_t vmm_vectors = 100;
  std::size_t vmm_repeats = 20;
  std::filesystem::path out_dir = "results";
  std::size_t threads = 1;

  /// Throws InvalidInput on empty grids, zero repeats, or bad ranges.
  void validate() const;
  const std::vector<double>& gnorm_values() const;
};

/// 2^(k/2) for k = -4..4: log-spaced over [0.25, 4] and containing 1 exactly.
std::vector<double> default_gnorm_grid();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Hex FNV-1a of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

taskgen::MultiTaskDataset make_dataset(const ExperimentConfig& cfg);

// ---------------------------------------------------------------- training

struct SeedOutcome {
  std::uint64_t seed = 0;
  nn::TrainResult sgd;
  nn::TrainResult ewc;
  nn::TernarySolution ternary;  // of the EWC network
};

struct TrainOutcome {
  std::array<double, 2> linear_baseline{0.0, 0.0};
  std::vector<SeedOutcome> seeds;
  std::size_t selected = 0;  // index into seeds

  const SeedOutcome& chosen() const { return seeds.at(selected); }
  /// Mean final test accuracy per task over seeds for one method.
  std::array<double, 2> mean_final(nn::Method m) const;
};

/// Trains SGD and EWC for every seed and selects the deployable solution.
/// Throws RuntimeFailure when no candidate qualifies.
TrainOutcome run_training(const ExperimentConfig& cfg, const taskgen::MultiTaskDataset& data);

/// Solution file: float and ternary weights, scales, EWC state, accuracies,
/// provenance.
struct SolutionFile {
  nn::Network network;
  nn::TernarySolution ternary;
  nn::EwcState ewc;
  std::array<double, 2> float_accuracy{0.0, 0.0};
  std::array<double, 2> linear_baseline{0.0, 0.0};
  std::uint64_t seed = 0;
  nn::Hyperparameters hp;
  std::uint64_t dataset_seed = 0;
};
SolutionFile make_solution_file(const TrainOutcome& t, const ExperimentConfig& cfg,
                                std::size_t index);
void save_solution(std::ostream& os, const SolutionFile& s);
SolutionFile load_solution(std::istream& is);
void save_solution(const std::filesystem::path& p, const SolutionFile& s);
SolutionFile load_solution(const std::filesystem::path& p);

/// Writes history_seed<N>.csv per seed, candidates.csv, train_summary.json
/// and solution.json under cfg.out_dir.
void write_training_outputs(const TrainOutcome& t, const ExperimentConfig& cfg);

// ---------------------------------------------------------------- inference

struct Accuracy {
  double task1 = 0.0;
  double task2 = 0.0;
  double mean() const { return 0.5 * (task1 + task2); }
};

Accuracy evaluate_software(const nn::TernarySolution& sol, const taskgen::MultiTaskDataset& data);
Accuracy evaluate_ensemble(chip::SimChip& chip, const ensemble::EnsembleNetwork& net,
                           const taskgen::MultiTaskDataset& data, bool allow_degraded = false);

// ---------------------------------------------------------------- sweeps

/// One repeat at one value of the independent variable.
struct SweepRow {
  std::string variant;  // "ensemble" or "ideal"
  double x = 0.0;
  std::size_t repeat = 0;
  bool mapping_success = true;
  bool degraded = false;
  std::vector<std::array<std::size_t, 2>> alpha;  // per layer [pos, neg]
  std::size_t devices = 0;
  Accuracy acc;
};

struct Summary {
  double x = 0.0;
  std::string variant;
  std::size_t n = 0;
  double mean = 0.0;  // multi-task accuracy
  double std = 0.0;
  double task1_mean = 0.0;
  double task2_mean = 0.0;
  double success_rate = 0.0;
  std::vector<std::array<double, 2>> alpha_mean;  // per layer [pos, neg]
  double devices_mean = 0.0;
  double devices_std = 0.0;
};

struct SweepResult {
  std::string name;      // defect, beta, gnorm
  std::string variable;  // fault_rate, beta, g_norm
  std::string config_hash;
  std::string version;
  std::vector<SweepRow> rows;

  std::vector<Summary> summarize(const std::string& variant = "ensemble") const;
};

void write_sweep_csv(std::ostream& os, const SweepResult& r);
SweepResult read_sweep_csv(std::istream& is);

/// Defect-injection sweep: ideal devices, StuckHigh faults, beta = 1.
SweepResult defect_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                         const taskgen::MultiTaskDataset& data);
/// beta sweep on a noisy chip with a fixed fault map, plus the ideal reference.
SweepResult beta_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                       const taskgen::MultiTaskDataset& data);
/// G_norm sweep for the ideal model and the noisy beta = gnorm_beta ensemble.
SweepResult gnorm_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                        const taskgen::MultiTaskDataset& data);

struct VmmReport {
  std::vector<std::array<double, 2>> points;  // (theoretical, mean measured), uA
  double slope = 0.0;
  double intercept = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  double max_rel_error = 0.0;
  std::size_t devices_programmed = 0;
  std::size_t devices_failed = 0;
  std::string config_hash;
};

/// Random 4-level kernel write, conductance-map extraction, then
/// vmm_vectors random voltage vectors each measured vmm_repeats times.
VmmReport vmm_validate(const ExperimentConfig& cfg, bool noiseless = false);
void write_vmm_csv(std::ostream& os, const VmmReport& r);
VmmReport read_vmm_csv(std::istream& is);

// ---------------------------------------------------------------- checks

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Check> check_training(const TrainOutcome& t, double min_selected_mean = 0.70);
/// Success thresholds, exact software accuracy where mapped, and mean forced
/// accuracy over the failed repeats at the top rate below the baseline.
std::vector<Check> check_defect_sweep(const SweepResult& r, const Accuracy& software,
                                      double baseline_mean);
/// Mean alpha per layer and device totals non-decreasing over rates <= 35 %,
/// allowing one inversion of at most one placement.
Check check_ensemble_scaling(const SweepResult& r);
std::vector<Check> check_beta_sweep(const SweepResult& r, const Accuracy& software);
std::vector<Check> check_gnorm_sweep(const SweepResult& r, std::array<double, 2> baselines,
                                     double plateau_tol = 0.01);
std::vector<Check> check_vmm(const VmmReport& r, bool noiseless);

/// Per-repeat seeds are derived from (cfg.seed, stream, a, b) so that
/// parallel and serial runs agree.
std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b);

// ---------------------------------------------------------------- report

struct ReportOutcome {
  std::vector<std::string> written;
  std::vector<std::string> missing;
  std::vector<Check> checks;
  bool all_pass() const;
};

/// Builds fig1c, fig4f, fig5b, fig5c, fig5d, fig6a, fig6e CSVs and
/// summary.txt from the raw outputs in `dir`.
ReportOutcome build_report(const std::filesystem::path& dir);

}  // namespace lea::harness
