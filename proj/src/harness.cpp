#include "lea/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "lea/errors.hpp"
#include "lea/rng.hpp"

#ifndef LEA_VERSION
#define LEA_VERSION "0.0.0"
#endif

namespace lea::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefectStream = 1;
constexpr std::uint64_t kBetaStream = 2;
constexpr std::uint64_t kGnormStream = 3;
constexpr std::uint64_t kVmmStream = 4;
constexpr std::uint64_t kFaultMapStream = 7;

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any task is rethrown on the caller.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw RuntimeFailure("cannot create directory " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) ensure_dir(p.parent_path());
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write " + p.string());
  os << std::setprecision(17);
  return os;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

std::string tool_version() { return LEA_VERSION; }

std::vector<double> default_gnorm_grid() {
  std::vector<double> g;
  for (int k = -4; k <= 4; ++k) g.push_back(std::pow(2.0, k / 2.0));
  return g;
}

const std::vector<double>& ExperimentConfig::gnorm_values() const {
  static const std::vector<double> def = default_gnorm_grid();
  return gnorm_grid.empty() ? def : gnorm_grid;
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("config: " + what);
  };
  need(dataset.n_train >= 1 && dataset.n_test >= 1, "dataset sizes must be >= 1");
  need(training.n_seeds >= 1, "training.n_seeds must be >= 1");
  need(training.hp.learning_rate > 0.0, "learning_rate must be > 0");
  need(training.hp.batch_size >= 1, "batch_size must be >= 1");
  need(training.hp.epochs_per_task >= 1, "epochs_per_task must be >= 1");
  need(training.hp.ewc_lambda >= 0.0, "ewc_lambda must be >= 0");
  noise.validate();
  need(theta > 0.0, "theta must be > 0");
  need(!fault_rates.empty(), "fault_rates must be nonempty");
  for (double r : fault_rates) need(r >= 0.0 && r <= 1.0, "fault rates must lie in [0, 1]");
  need(!betas.empty(), "betas must be nonempty");
  for (auto b : betas) need(b >= 1, "betas must be >= 1");
  need(hw_fault_rate >= 0.0 && hw_fault_rate <= 1.0, "hw_fault_rate must lie in [0, 1]");
  need(gnorm_beta >= 1, "gnorm_beta must be >= 1");
  for (double g : gnorm_grid) need(g > 0.0 && std::isfinite(g), "g_norm values must be > 0");
  need(repeats >= 1, "repeats must be >= 1");
  need(vmm_vectors >= 1 && vmm_repeats >= 1, "vmm counts must be >= 1");
  need(threads >= 1, "threads must be >= 1");
}

json config_to_json(const ExperimentConfig& c) {
  json noise{{"prog_sigma", c.noise.prog_sigma},
             {"read_current_sigma", c.noise.read_current_sigma},
             {"adc_bits", c.noise.adc_bits ? json(*c.noise.adc_bits) : json(nullptr)},
             {"adc_fullscale", c.noise.adc_fullscale},
             {"dac_bits", c.noise.dac_bits ? json(*c.noise.dac_bits) : json(nullptr)}};
  return json{
      {"seed", c.seed},
      {"dataset", {{"n_train", c.dataset.n_train}, {"n_test", c.dataset.n_test},
                   {"seed", c.dataset.seed}}},
      {"training", {{"learning_rate", c.training.hp.learning_rate},
                    {"batch_size", c.training.hp.batch_size},
                    {"epochs_per_task", c.training.hp.epochs_per_task},
                    {"ewc_lambda", c.training.hp.ewc_lambda},
                    {"n_seeds", c.training.n_seeds}}},
      {"noise", noise},
      {"theta", c.theta},
      {"fault_rates", c.fault_rates},
      {"fault_mode", chip::fault_name(c.fault_mode)},
      {"betas", c.betas},
      {"hw_fault_rate", c.hw_fault_rate},
      {"gnorm_beta", c.gnorm_beta},
      {"gnorm_grid", c.gnorm_values()},
      {"repeats", c.repeats},
      {"vmm_vectors", c.vmm_vectors},
      {"vmm_repeats", c.vmm_repeats},
      {"out_dir", c.out_dir.string()},
      {"threads", c.threads},
  };
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput("config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw InvalidInput("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void take_bits(const json& j, const char* key, std::optional<int>& dst) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    dst.reset();
  else
    dst = j.at(key).get<int>();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j,
               {"seed", "dataset", "training", "noise_preset", "noise", "theta", "fault_rates",
                "fault_mode", "betas", "hw_fault_rate", "gnorm_beta", "gnorm_grid", "repeats",
                "vmm_vectors", "vmm_repeats", "out_dir", "threads"},
               "config");
    take(j, "seed", c.seed);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"n_train", "n_test", "seed"}, "dataset");
      take(d, "n_train", c.dataset.n_train);
      take(d, "n_test", c.dataset.n_test);
      take(d, "seed", c.dataset.seed);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, {"learning_rate", "batch_size", "epochs_per_task", "ewc_lambda", "n_seeds"},
                 "training");
      take(t, "learning_rate", c.training.hp.learning_rate);
      take(t, "batch_size", c.training.hp.batch_size);
      take(t, "epochs_per_task", c.training.hp.epochs_per_task);
      take(t, "ewc_lambda", c.training.hp.ewc_lambda);
      take(t, "n_seeds", c.training.n_seeds);
    }
    if (j.contains("noise_preset")) {
      auto p = j.at("noise_preset").get<std::string>();
      if (p == "ideal")
        c.noise = chip::NoiseConfig::ideal();
      else if (p == "defaults")
        c.noise = chip::NoiseConfig::defaults();
      else if (p == "hardware_like")
        c.noise = chip::NoiseConfig::hardware_like();
      else
        throw InvalidInput("config: unknown noise_preset '" + p + "'");
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      check_keys(n, {"prog_sigma", "read_current_sigma", "adc_bits", "adc_fullscale", "dac_bits"},
                 "noise");
      take(n, "prog_sigma", c.noise.prog_sigma);
      take(n, "read_current_sigma", c.noise.read_current_sigma);
      take_bits(n, "adc_bits", c.noise.adc_bits);
      take(n, "adc_fullscale", c.noise.adc_fullscale);
      take_bits(n, "dac_bits", c.noise.dac_bits);
    }
    take(j, "theta", c.theta);
    take(j, "fault_rates", c.fault_rates);
    if (j.contains("fault_mode")) c.fault_mode = chip::parse_fault(j.at("fault_mode").get<std::string>());
    take(j, "betas", c.betas);
    take(j, "hw_fault_rate", c.hw_fault_rate);
    take(j, "gnorm_beta", c.gnorm_beta);
    take(j, "gnorm_grid", c.gnorm_grid);
    take(j, "repeats", c.repeats);
    take(j, "vmm_vectors", c.vmm_vectors);
    take(j, "vmm_repeats", c.vmm_repeats);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    take(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  // Output location and worker count do not change results.
  json j = config_to_json(cfg);
  j.erase("out_dir");
  j.erase("threads");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

taskgen::MultiTaskDataset make_dataset(const ExperimentConfig& cfg) {
  return taskgen::make_multitask_dataset(cfg.dataset.n_train, cfg.dataset.n_test,
                                         cfg.dataset.seed);
}

std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b) {
  return derive_seed(derive_seed(derive_seed(cfg.seed, stream), a), b);
}

// ---------------------------------------------------------------- training

std::array<double, 2> TrainOutcome::mean_final(nn::Method m) const {
  std::array<double, 2> acc{0.0, 0.0};
  if (seeds.empty()) return acc;
  for (const auto& s : seeds) {
    const auto& h = (m == nn::Method::SGD ? s.sgd : s.ewc).history;
    if (h.epochs.empty()) continue;
    acc[0] += h.epochs.back().task1_acc;
    acc[1] += h.epochs.back().task2_acc;
  }
  for (auto& a : acc) a /= static_cast<double>(seeds.size());
  return acc;
}

TrainOutcome run_training(const ExperimentConfig& cfg, const taskgen::MultiTaskDataset& data) {
  cfg.validate();
  TrainOutcome out;
  out.linear_baseline = {nn::linear_baseline(data.train_task1, data.test_task1),
                         nn::linear_baseline(data.train_task2, data.test_task2)};
  out.seeds.resize(cfg.training.n_seeds);
  parallel_for(out.seeds.size(), cfg.threads, [&](std::size_t i) {
    auto& s = out.seeds[i];
    s.seed = cfg.seed + i;
    s.sgd = nn::train_continual(s.seed, data, nn::Method::SGD, cfg.training.hp);
    s.ewc = nn::train_continual(s.seed, data, nn::Method::EWC, cfg.training.hp);
    s.ternary = nn::ternarize(s.ewc.network);
    nn::score_solution(s.ternary, data);
  });
  std::vector<nn::TernarySolution> cands;
  for (const auto& s : out.seeds) cands.push_back(s.ternary);
  out.selected = nn::select_solution(cands, out.linear_baseline);
  return out;
}

SolutionFile make_solution_file(const TrainOutcome& t, const ExperimentConfig& cfg,
                                std::size_t index) {
  const auto& s = t.seeds.at(index);
  SolutionFile f;
  f.network = s.ewc.network;
  f.ternary = s.ternary;
  f.ewc = s.ewc.ewc;
  if (!s.ewc.history.epochs.empty())
    f.float_accuracy = {s.ewc.history.epochs.back().task1_acc,
                        s.ewc.history.epochs.back().task2_acc};
  f.linear_baseline = t.linear_baseline;
  f.seed = s.seed;
  f.hp = cfg.training.hp;
  f.dataset_seed = cfg.dataset.seed;
  return f;
}

void write_training_outputs(const TrainOutcome& t, const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  for (const auto& s : t.seeds) {
    auto os = open_out(cfg.out_dir / ("history_seed" + std::to_string(s.seed) + ".csv"));
    std::array<nn::TrainHistory, 2> h{s.sgd.history, s.ewc.history};
    nn::write_history_csv(os, h);
  }
  {
    auto os = open_out(cfg.out_dir / "candidates.csv");
    os << "seed,ewc_task1,ewc_task2,ternary_task1,ternary_task2,qualifies,selected\n";
    for (std::size_t i = 0; i < t.seeds.size(); ++i) {
      const auto& s = t.seeds[i];
      const auto& last = s.ewc.history.epochs.back();
      bool q = s.ternary.accuracy[0] > t.linear_baseline[0] &&
               s.ternary.accuracy[1] > t.linear_baseline[1];
      os << s.seed << ',' << last.task1_acc << ',' << last.task2_acc << ','
         << s.ternary.accuracy[0] << ',' << s.ternary.accuracy[1] << ',' << int(q) << ','
         << int(i == t.selected) << '\n';
    }
  }
  {
    auto sgd = t.mean_final(nn::Method::SGD);
    auto ewc = t.mean_final(nn::Method::EWC);
    json j{{"config_hash", config_hash(cfg)},
           {"version", tool_version()},
           {"n_seeds", t.seeds.size()},
           {"linear_baseline", t.linear_baseline},
           {"sgd_mean_final", sgd},
           {"ewc_mean_final", ewc},
           {"selected_seed", t.chosen().seed},
           {"selected_ternary_accuracy", t.chosen().ternary.accuracy}};
    auto os = open_out(cfg.out_dir / "train_summary.json");
    os << j.dump(2) << '\n';
  }
  save_solution(cfg.out_dir / "solution.json", make_solution_file(t, cfg, t.selected));
}

// ---------------------------------------------------------------- inference

Accuracy evaluate_software(const nn::TernarySolution& sol, const taskgen::MultiTaskDataset& data) {
  auto net = sol.to_network();
  return {nn::evaluate(net, data.test_task1), nn::evaluate(net, data.test_task2)};
}

Accuracy evaluate_ensemble(chip::SimChip& chip, const ensemble::EnsembleNetwork& net,
                           const taskgen::MultiTaskDataset& data, bool allow_degraded) {
  auto run = [&](const std::vector<taskgen::Sample>& split) {
    if (split.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : split) {
      auto f = ensemble::ensemble_forward(chip, net, s.features, allow_degraded);
      if (nn::argmax(f.probabilities) == static_cast<int>(s.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
  };
  Accuracy a;
  a.task1 = run(data.test_task1);
  a.task2 = run(data.test_task2);
  return a;
}

// ---------------------------------------------------------------- sweeps

namespace {

void fill_mapping_stats(SweepRow& row, const ensemble::EnsembleNetwork& net) {
  auto st = ensemble::ensemble_stats(net.mappings);
  row.alpha = st.alpha;
  row.devices = st.total_devices;
  row.mapping_success = net.all_successful();
}

SweepResult make_result(const ExperimentConfig& cfg, std::string name, std::string variable) {
  SweepResult r;
  r.name = std::move(name);
  r.variable = std::move(variable);
  r.config_hash = config_hash(cfg);
  r.version = tool_version();
  return r;
}

chip::NoiseConfig seeded(chip::NoiseConfig n, std::uint64_t seed) {
  n.seed = seed;
  return n;
}

}  // namespace

SweepResult defect_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                         const taskgen::MultiTaskDataset& data) {
  cfg.validate();
  auto out = make_result(cfg, "defect", "fault_rate");
  const std::size_t nr = cfg.fault_rates.size(), R = cfg.repeats;
  out.rows.resize(nr * R);
  parallel_for(nr * R, cfg.threads, [&](std::size_t k) {
    std::size_t i = k / R, r = k % R;
    auto seed = repeat_seed(cfg, kDefectStream, i, r);
    chip::SimChip chip(chip::NoiseConfig::ideal(seed), true);
    chip.inject_faults(cfg.fault_rates[i], cfg.fault_mode, seed);
    auto net = ensemble::deploy(chip, sol, 1, cfg.theta, 1.0);
    SweepRow& row = out.rows[k];
    row.variant = "ensemble";
    row.x = cfg.fault_rates[i];
    row.repeat = r;
    fill_mapping_stats(row, net);
    row.degraded = !row.mapping_success;
    row.acc = evaluate_ensemble(chip, net, data, row.degraded);
  });
  return out;
}

SweepResult beta_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                       const taskgen::MultiTaskDataset& data) {
  cfg.validate();
  auto out = make_result(cfg, "beta", "beta");
  const auto fault_seed = repeat_seed(cfg, kFaultMapStream, 0, 0);
  const std::size_t nb = cfg.betas.size(), R = cfg.repeats;
  out.rows.resize((nb + 1) * R);
  parallel_for((nb + 1) * R, cfg.threads, [&](std::size_t k) {
    std::size_t b = k / R, r = k % R;
    SweepRow& row = out.rows[k];
    row.repeat = r;
    if (b == nb) {
      // Reference: perfect devices, no ensembles.
      chip::SimChip chip(chip::NoiseConfig::ideal(), true);
      auto net = ensemble::deploy(chip, sol, 1, cfg.theta, 1.0);
      row.variant = "ideal";
      row.x = 1.0;
      fill_mapping_stats(row, net);
      row.acc = evaluate_ensemble(chip, net, data);
      return;
    }
    chip::SimChip chip(seeded(cfg.noise, repeat_seed(cfg, kBetaStream, b, r)));
    chip.inject_faults(cfg.hw_fault_rate, cfg.fault_mode, fault_seed);
    auto net = ensemble::deploy(chip, sol, cfg.betas[b], cfg.theta, 1.0);
    row.variant = "ensemble";
    row.x = static_cast<double>(cfg.betas[b]);
    fill_mapping_stats(row, net);
    row.degraded = !row.mapping_success;
    row.acc = evaluate_ensemble(chip, net, data, row.degraded);
  });
  return out;
}

SweepResult gnorm_sweep(const ExperimentConfig& cfg, const nn::TernarySolution& sol,
                        const taskgen::MultiTaskDataset& data) {
  cfg.validate();
  auto out = make_result(cfg, "gnorm", "g_norm");
  const auto& grid = cfg.gnorm_values();
  const auto fault_seed = repeat_seed(cfg, kFaultMapStream, 0, 0);
  const std::size_t R = cfg.repeats, ng = grid.size();
  out.rows.resize(2 * R * ng);
  // One deployment per (variant, repeat); g_norm is swept on that deployment.
  parallel_for(2 * R, cfg.threads, [&](std::size_t k) {
    bool ideal = k < R;
    std::size_t r = k % R;
    std::optional<chip::SimChip> chip;
    std::size_t beta = 1;
    if (ideal) {
      chip.emplace(chip::NoiseConfig::ideal(), true);
    } else {
      chip.emplace(seeded(cfg.noise, repeat_seed(cfg, kGnormStream, 0, r)));
      chip->inject_faults(cfg.hw_fault_rate, cfg.fault_mode, fault_seed);
      beta = cfg.gnorm_beta;
    }
    auto net = ensemble::deploy(*chip, sol, beta, cfg.theta, 1.0);
    for (std::size_t g = 0; g < ng; ++g) {
      net.set_g_norm(grid[g]);
      SweepRow& row = out.rows[k * ng + g];
      row.variant = ideal ? "ideal" : "ensemble";
      row.x = grid[g];
      row.repeat = r;
      fill_mapping_stats(row, net);
      row.degraded = !row.mapping_success;
      row.acc = evaluate_ensemble(*chip, net, data, row.degraded);
    }
  });
  return out;
}

std::vector<Summary> SweepResult::summarize(const std::string& variant) const {
  std::vector<double> xs;
  for (const auto& r : rows)
    if (r.variant == variant && std::none_of(xs.begin(), xs.end(), [&](double x) { return near(x, r.x); }))
      xs.push_back(r.x);
  std::sort(xs.begin(), xs.end());
  std::vector<Summary> out;
  for (double x : xs) {
    Summary s;
    s.x = x;
    s.variant = variant;
    std::vector<double> acc, t1, t2, dev;
    std::size_t ok = 0, n_layers = 0;
    for (const auto& r : rows)
      if (r.variant == variant && near(r.x, x)) n_layers = std::max(n_layers, r.alpha.size());
    s.alpha_mean.assign(n_layers, {0.0, 0.0});
    for (const auto& r : rows) {
      if (r.variant != variant || !near(r.x, x)) continue;
      acc.push_back(r.acc.mean());
      t1.push_back(r.acc.task1);
      t2.push_back(r.acc.task2);
      dev.push_back(static_cast<double>(r.devices));
      ok += r.mapping_success;
      for (std::size_t l = 0; l < r.alpha.size(); ++l)
        for (int p = 0; p < 2; ++p) s.alpha_mean[l][p] += static_cast<double>(r.alpha[l][p]);
    }
    s.n = acc.size();
    s.mean = mean_of(acc);
    s.std = std_of(acc);
    s.task1_mean = mean_of(t1);
    s.task2_mean = mean_of(t2);
    s.devices_mean = mean_of(dev);
    s.devices_std = std_of(dev);
    s.success_rate = static_cast<double>(ok) / static_cast<double>(s.n);
    for (auto& a : s.alpha_mean)
      for (auto& v : a) v /= static_cast<double>(s.n);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {
constexpr const char* kSweepHeader =
    "config_hash,version,sweep,variable,variant,x,repeat,mapping_success,degraded,devices,"
    "task1_acc,task2_acc,mean_acc,alpha";
}

void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << std::setprecision(17) << kSweepHeader << '\n';
  for (const auto& row : r.rows) {
    std::string alpha;
    for (std::size_t l = 0; l < row.alpha.size(); ++l) {
      if (l) alpha += ';';
      alpha += std::to_string(row.alpha[l][0]) + '/' + std::to_string(row.alpha[l][1]);
    }
    os << r.config_hash << ',' << r.version << ',' << r.name << ',' << r.variable << ','
       << row.variant << ',' << row.x << ',' << row.repeat << ',' << int(row.mapping_success)
       << ',' << int(row.degraded) << ',' << row.devices << ',' << row.acc.task1 << ','
       << row.acc.task2 << ',' << row.acc.mean() << ',' << alpha << '\n';
  }
}

SweepResult read_sweep_csv(std::istream& is) {
  SweepResult r;
  std::string line;
  if (!std::getline(is, line) || line != kSweepHeader)
    throw InvalidInput("sweep csv: unexpected header");
  try {
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      if (f.size() != 14) throw InvalidInput("sweep csv: expected 14 fields: " + line);
      r.config_hash = f[0];
      r.version = f[1];
      r.name = f[2];
      r.variable = f[3];
      SweepRow row;
      row.variant = f[4];
      row.x = std::stod(f[5]);
      row.repeat = std::stoul(f[6]);
      row.mapping_success = f[7] == "1";
      row.degraded = f[8] == "1";
      row.devices = std::stoul(f[9]);
      row.acc.task1 = std::stod(f[10]);
      row.acc.task2 = std::stod(f[11]);
      if (!f[13].empty())
        for (const auto& layer : split(f[13], ';')) {
          auto pn = split(layer, '/');
          if (pn.size() != 2) throw InvalidInput("sweep csv: bad alpha field: " + f[13]);
          row.alpha.push_back({std::stoul(pn[0]), std::stoul(pn[1])});
        }
      r.rows.push_back(std::move(row));
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidInput*>(&e)) throw;
    throw InvalidInput("sweep csv: bad number in row: " + line);
  }
  return r;
}

// ---------------------------------------------------------------- VMM

namespace {

void fit(VmmReport& r) {
  const double n = static_cast<double>(r.points.size());
  if (r.points.empty()) return;
  double sx = 0, sy = 0;
  for (auto [x, y] : r.points) sx += x, sy += y;
  double mx = sx / n, my = sy / n, sxx = 0, sxy = 0, syy = 0, se = 0, xmax = 0, emax = 0;
  for (auto [x, y] : r.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
    se += (y - x) * (y - x);
    xmax = std::max(xmax, std::abs(x));
    emax = std::max(emax, std::abs(y - x));
  }
  r.slope = sxx > 0 ? sxy / sxx : 0.0;
  r.intercept = my - r.slope * mx;
  double ssres = 0;
  for (auto [x, y] : r.points) {
    double e = y - (r.slope * x + r.intercept);
    ssres += e * e;
  }
  r.r2 = syy > 0 ? 1.0 - ssres / syy : 1.0;
  r.rmse = std::sqrt(se / n);
  r.max_rel_error = xmax > 0 ? emax / xmax : emax;
}

}  // namespace

VmmReport vmm_validate(const ExperimentConfig& cfg, bool noiseless) {
  cfg.validate();
  const auto seed = repeat_seed(cfg, kVmmStream, 0, 0);
  // Raw row currents: the ADC stage is bypassed here.
  chip::NoiseConfig noise = chip::NoiseConfig::ideal(seed);
  if (!noiseless) {
    noise.prog_sigma = cfg.noise.prog_sigma;
    noise.read_current_sigma = cfg.noise.read_current_sigma;
  }
  chip::SimChip chip(noise, noiseless);
  chip.inject_faults(cfg.hw_fault_rate, cfg.fault_mode, repeat_seed(cfg, kFaultMapStream, 0, 0));
  const std::size_t kernel = 0;
  auto w = chip::random_levels_write(chip, kernel, seed, cfg.theta);

  const auto& geom = chip.geometry();
  chip::Region whole{kernel, 0, 0, geom.rows_per_kernel, geom.cols_per_kernel};
  // Conductance map: mean of vmm_repeats full-array reads.
  Matrix gmap(geom.rows_per_kernel, geom.cols_per_kernel);
  for (std::size_t k = 0; k < cfg.vmm_repeats; ++k) {
    auto m = chip.read_conductance_map(whole);
    for (std::size_t i = 0; i < gmap.size(); ++i) gmap.data()[i] += m.data()[i];
  }
  for (auto& g : gmap.data()) g /= static_cast<double>(cfg.vmm_repeats);

  VmmReport rep;
  rep.config_hash = config_hash(cfg);
  rep.devices_programmed = w.programmed.success.size();
  rep.devices_failed = rep.devices_programmed - w.programmed.n_success();
  Rng vrng(derive_seed(seed, 1));
  const double v = chip.levels().v_read;
  for (std::size_t t = 0; t < cfg.vmm_vectors; ++t) {
    Vector volts(geom.cols_per_kernel);
    for (auto& x : volts) x = uniform(vrng, -v, v);
    Vector mean(geom.rows_per_kernel, 0.0);
    for (std::size_t k = 0; k < cfg.vmm_repeats; ++k) {
      auto cur = chip.kernel_vmm(kernel, volts);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += cur[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      double theory = 0.0;
      for (std::size_t j = 0; j < volts.size(); ++j) theory += gmap(i, j) * volts[j];
      rep.points.push_back({theory, mean[i] / static_cast<double>(cfg.vmm_repeats)});
    }
  }
  fit(rep);
  return rep;
}

void write_vmm_csv(std::ostream& os, const VmmReport& r) {
  os << std::setprecision(17) << "config_hash,version,theoretical_uA,measured_uA\n";
  for (auto [x, y] : r.points) os << r.config_hash << ',' << tool_version() << ',' << x << ',' << y << '\n';
}

VmmReport read_vmm_csv(std::istream& is) {
  VmmReport r;
  std::string line;
  if (!std::getline(is, line) || line != "config_hash,version,theoretical_uA,measured_uA")
    throw InvalidInput("vmm csv: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 4) throw InvalidInput("vmm csv: expected 4 fields: " + line);
    r.config_hash = f[0];
    try {
      r.points.push_back({std::stod(f[2]), std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw InvalidInput("vmm csv: bad number in row: " + line);
    }
  }
  fit(r);
  return r;
}

// ---------------------------------------------------------------- checks

std::vector<Check> check_training(const TrainOutcome& t, double min_selected_mean) {
  auto sgd = t.mean_final(nn::Method::SGD);
  auto ewc = t.mean_final(nn::Method::EWC);
  const auto& b = t.linear_baseline;
  std::vector<Check> out;
  out.push_back({"sgd_forgets_task1", sgd[0] < b[0],
                 "SGD task1 " + fmt(sgd[0]) + " vs baseline " + fmt(b[0])});
  out.push_back({"ewc_beats_baseline", ewc[0] > b[0] && ewc[1] > b[1],
                 "EWC " + fmt(ewc[0]) + "/" + fmt(ewc[1]) + " vs " + fmt(b[0]) + "/" + fmt(b[1])});
  double sel = t.chosen().ternary.mean_accuracy();
  out.push_back({"selected_quantized", sel >= min_selected_mean,
                 "seed " + std::to_string(t.chosen().seed) + " mean " + fmt(sel) + " (need >= " +
                     fmt(min_selected_mean, 2) + ")"});
  return out;
}

std::vector<Check> check_defect_sweep(const SweepResult& r, const Accuracy& software,
                                      double baseline_mean) {
  std::vector<Check> out;
  auto sum = r.summarize();
  bool ok_low = true, ok_35 = true, seen_35 = false;
  std::string detail;
  for (const auto& s : sum) {
    detail += fmt(s.x * 100, 0) + "%:" + fmt(s.success_rate, 2) + " ";
    if (s.x <= 0.30 + 1e-9 && s.success_rate < 1.0) ok_low = false;
    if (near(s.x, 0.35)) seen_35 = true, ok_35 = s.success_rate >= 0.90;
  }
  out.push_back({"mapping_success", ok_low && ok_35 && seen_35, detail});

  std::size_t mismatches = 0, mapped = 0;
  for (const auto& row : r.rows)
    if (row.mapping_success) {
      ++mapped;
      if (row.acc.task1 != software.task1 || row.acc.task2 != software.task2) ++mismatches;
    }
  out.push_back({"mapped_accuracy_exact", mismatches == 0 && mapped > 0,
                 std::to_string(mismatches) + " of " + std::to_string(mapped) +
                     " mapped repeats differ from software " + fmt(software.mean())});

  double top = sum.empty() ? 0.0 : sum.back().x;
  std::size_t failed = 0, above = 0;
  double forced_sum = 0.0;
  for (const auto& row : r.rows)
    if (near(row.x, top) && !row.mapping_success) {
      ++failed;
      forced_sum += row.acc.mean();
      if (row.acc.mean() >= baseline_mean) ++above;
    }
  // Judged on the mean over failed repeats, the quantity plotted per rate.
  const double forced_mean = failed ? forced_sum / static_cast<double>(failed) : 0.0;
  out.push_back({"top_rate_failures",
                 top >= 0.40 - 1e-9 && failed >= 1 && forced_mean < baseline_mean,
                 fmt(top * 100, 0) + "%: " + std::to_string(failed) +
                     " failed repeats, mean forced accuracy " + fmt(forced_mean) + " vs baseline " +
                     fmt(baseline_mean) + " (" + std::to_string(above) + " at or above)"});
  return out;
}

Check check_ensemble_scaling(const SweepResult& r) {
  auto sum = r.summarize();
  std::vector<Summary> s;
  for (const auto& x : sum)
    if (x.x <= 0.35 + 1e-9) s.push_back(x);
  // One placement of the widest layer, in devices.
  const double placement_devices = 72.0;
  std::size_t inversions = 0;
  bool too_big = false;
  for (std::size_t i = 1; i < s.size(); ++i) {
    for (std::size_t l = 0; l < s[i].alpha_mean.size() && l < s[i - 1].alpha_mean.size(); ++l) {
      double prev = 0.5 * (s[i - 1].alpha_mean[l][0] + s[i - 1].alpha_mean[l][1]);
      double cur = 0.5 * (s[i].alpha_mean[l][0] + s[i].alpha_mean[l][1]);
      if (cur < prev - 1e-12) ++inversions, too_big |= prev - cur > 1.0;
    }
    if (s[i].devices_mean < s[i - 1].devices_mean - 1e-12)
      ++inversions, too_big |= s[i - 1].devices_mean - s[i].devices_mean > placement_devices;
  }
  std::string detail = "devices:";
  for (const auto& x : s) detail += " " + fmt(x.devices_mean, 1);
  detail += "; inversions " + std::to_string(inversions);
  return {"ensemble_scaling", s.size() >= 2 && inversions <= 1 && !too_big, detail};
}

std::vector<Check> check_beta_sweep(const SweepResult& r, const Accuracy& software) {
  std::vector<Check> out;
  auto s = r.summarize("ensemble");
  bool mono = s.size() >= 2;
  std::string detail;
  for (std::size_t i = 0; i < s.size(); ++i) {
    detail += "b" + fmt(s[i].x, 0) + ":" + fmt(s[i].mean) + "+-" + fmt(s[i].std) + " ";
    if (i > 0 && s[i].mean < s[i - 1].mean - std::max(s[i].std, s[i - 1].std)) mono = false;
  }
  out.push_back({"beta_monotone", mono, detail});
  auto it = std::find_if(s.begin(), s.end(), [](const Summary& x) { return near(x.x, 3.0); });
  bool close = it != s.end() && std::abs(it->mean - software.mean()) <= 0.02;
  out.push_back({"beta3_near_software", close,
                 (it == s.end() ? std::string("beta 3 missing")
                                : "beta 3 mean " + fmt(it->mean)) +
                     " vs software " + fmt(software.mean())});
  bool ideal_ok = false;
  std::size_t n_ideal = 0;
  for (const auto& row : r.rows)
    if (row.variant == "ideal") {
      ideal_ok = (n_ideal == 0 || ideal_ok) && row.acc.task1 == software.task1 &&
                 row.acc.task2 == software.task2;
      ++n_ideal;
    }
  out.push_back({"ideal_reference", ideal_ok, std::to_string(n_ideal) + " ideal repeats"});
  return out;
}

std::vector<Check> check_gnorm_sweep(const SweepResult& r, std::array<double, 2> baselines,
                                     double plateau_tol) {
  std::vector<Check> out;
  auto s = r.summarize("ideal");
  auto one = std::find_if(s.begin(), s.end(), [](const Summary& x) { return near(x.x, 1.0); });
  if (s.empty() || one == s.end()) {
    out.push_back({"gnorm_peak", false, "ideal run at g_norm = 1 missing"});
    return out;
  }
  double best = 0.0, best_x = 0.0;
  for (const auto& x : s)
    if (x.mean > best) best = x.mean, best_x = x.x;
  out.push_back({"gnorm_peak", one->mean >= best - plateau_tol,
                 "at 1: " + fmt(one->mean) + ", max " + fmt(best) + " at " + fmt(best_x, 3)});
  bool ends = s.front().mean <= one->mean && s.back().mean <= one->mean;
  out.push_back({"gnorm_endpoints", ends,
                 fmt(s.front().x, 3) + ":" + fmt(s.front().mean) + " " + fmt(s.back().x, 3) + ":" +
                     fmt(s.back().mean)});
  auto window = [&](const std::vector<Summary>& v) -> std::pair<double, double> {
    auto c = std::find_if(v.begin(), v.end(), [](const Summary& x) { return near(x.x, 1.0); });
    auto good = [&](const Summary& x) {
      return x.task1_mean > baselines[0] && x.task2_mean > baselines[1];
    };
    if (c == v.end() || !good(*c)) return {0.0, 0.0};
    auto lo = c, hi = c;
    while (lo != v.begin() && good(*std::prev(lo))) --lo;
    while (std::next(hi) != v.end() && good(*std::next(hi))) ++hi;
    return {lo->x, hi->x};
  };
  auto [lo, hi] = window(s);
  out.push_back({"gnorm_window", lo > 0.0,
                 lo > 0.0 ? "ideal window [" + fmt(lo, 3) + ", " + fmt(hi, 3) + "]"
                          : std::string("no window at 1")});
  return out;
}

std::vector<Check> check_vmm(const VmmReport& r, bool noiseless) {
  if (noiseless)
    return {{"vmm_exact", r.max_rel_error <= 1e-12 && !r.points.empty(),
             "max relative error " + [&] {
               std::ostringstream os;
               os << r.max_rel_error;
               return os.str();
             }()}};
  bool ok = r.slope >= 0.99 && r.slope <= 1.01 && r.r2 >= 0.999;
  return {{"vmm_regression", ok,
           "slope " + fmt(r.slope, 5) + " intercept " + fmt(r.intercept, 4) + " uA, R2 " +
               fmt(r.r2, 6) + ", RMSE " + fmt(r.rmse, 4) + " uA over " +
               std::to_string(r.points.size()) + " points"}};
}

// ---------------------------------------------------------------- report

bool ReportOutcome::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

namespace {

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw InvalidInput("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
}

template <class F>
auto read_file(const fs::path& p, F&& reader) {
  std::ifstream is(p);
  if (!is) throw InvalidInput("cannot open " + p.string());
  return reader(is);
}

}  // namespace

ReportOutcome build_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("report: not a directory: " + dir.string());
  ReportOutcome rep;
  auto need = [&](const std::string& section, std::initializer_list<const char*> files) {
    bool ok = true;
    for (const char* f : files)
      if (!fs::exists(dir / f)) {
        rep.missing.push_back(section + ": " + f);
        ok = false;
      }
    return ok;
  };
  auto emit = [&](const std::string& name) {
    rep.written.push_back(name);
    return open_out(dir / name);
  };

  std::optional<SolutionFile> sol;
  if (fs::exists(dir / "solution.json")) sol = load_solution(dir / "solution.json");

  // fig1c: training curves.
  if (need("fig1c", {"train_summary.json"})) {
    auto summary = read_json(dir / "train_summary.json");
    std::map<std::pair<std::string, std::size_t>, std::array<std::vector<double>, 2>> curves;
    std::size_t n_files = 0;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().filename().string().rfind("history_seed", 0) == 0) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ++n_files;
      for (const auto& h : read_file(f, nn::read_history_csv))
        for (const auto& e : h.epochs) {
          auto& c = curves[{nn::method_name(h.method), e.epoch}];
          c[0].push_back(e.task1_acc);
          c[1].push_back(e.task2_acc);
        }
    }
    auto b = summary.at("linear_baseline").get<std::array<double, 2>>();
    auto os = emit("fig1c.csv");
    os << "config_hash,version,method,epoch,task1_mean,task1_std,task2_mean,task2_std,"
          "linear_task1,linear_task2\n";
    for (const auto& [key, c] : curves)
      os << summary.at("config_hash").get<std::string>() << ',' << tool_version() << ','
         << key.first << ',' << key.second << ',' << mean_of(c[0]) << ',' << std_of(c[0]) << ','
         << mean_of(c[1]) << ',' << std_of(c[1]) << ',' << b[0] << ',' << b[1] << '\n';
    auto sgd = summary.at("sgd_mean_final").get<std::array<double, 2>>();
    auto ewc = summary.at("ewc_mean_final").get<std::array<double, 2>>();
    auto sel = summary.at("selected_ternary_accuracy").get<std::array<double, 2>>();
    double sel_mean = 0.5 * (sel[0] + sel[1]);
    rep.checks.push_back({"training_curves",
                          sgd[0] < b[0] && ewc[0] > b[0] && ewc[1] > b[1] && sel_mean >= 0.70,
                          std::to_string(n_files) + " histories; SGD task1 " + fmt(sgd[0]) +
                              ", EWC " + fmt(ewc[0]) + "/" + fmt(ewc[1]) + ", baseline " +
                              fmt(b[0]) + "/" + fmt(b[1]) + ", selected " + fmt(sel_mean)});
  }

  // fig4f: VMM validation.
  if (need("fig4f", {"vmm_validate.csv"})) {
    auto v = read_file(dir / "vmm_validate.csv", read_vmm_csv);
    auto os = emit("fig4f.csv");
    os << "config_hash,version,theoretical_uA,measured_uA,slope,intercept,r2,rmse\n";
    for (auto [x, y] : v.points)
      os << v.config_hash << ',' << tool_version() << ',' << x << ',' << y << ',' << v.slope
         << ',' << v.intercept << ',' << v.r2 << ',' << v.rmse << '\n';
    for (auto& c : check_vmm(v, false)) rep.checks.push_back(c);
  }

  // fig5b-d: defect sweep.
  if (need("fig5b-d", {"defect_sweep.csv"})) {
    auto r = read_file(dir / "defect_sweep.csv", read_sweep_csv);
    auto s = r.summarize();
    {
      auto os = emit("fig5b.csv");
      os << "config_hash,version,fault_rate,layer,alpha_pos_mean,alpha_neg_mean\n";
      for (const auto& x : s)
        for (std::size_t l = 0; l < x.alpha_mean.size(); ++l)
          os << r.config_hash << ',' << r.version << ',' << x.x << ',' << l + 1 << ','
             << x.alpha_mean[l][0] << ',' << x.alpha_mean[l][1] << '\n';
    }
    {
      auto os = emit("fig5c.csv");
      os << "config_hash,version,fault_rate,devices_mean,devices_std\n";
      for (const auto& x : s)
        os << r.config_hash << ',' << r.version << ',' << x.x << ',' << x.devices_mean << ','
           << x.devices_std << '\n';
    }
    {
      auto os = emit("fig5d.csv");
      os << "config_hash,version,fault_rate,accuracy_mean,accuracy_std,task1_mean,task2_mean,"
            "success_rate\n";
      for (const auto& x : s)
        os << r.config_hash << ',' << r.version << ',' << x.x << ',' << x.mean << ',' << x.std
           << ',' << x.task1_mean << ',' << x.task2_mean << ',' << x.success_rate << '\n';
    }
    rep.checks.push_back(check_ensemble_scaling(r));
    if (sol) {
      Accuracy sw{sol->ternary.accuracy[0], sol->ternary.accuracy[1]};
      double b = 0.5 * (sol->linear_baseline[0] + sol->linear_baseline[1]);
      for (auto& c : check_defect_sweep(r, sw, b)) rep.checks.push_back(c);
    } else {
      rep.missing.push_back("defect checks: solution.json");
    }
  }

  // fig6a: beta sweep.
  if (need("fig6a", {"beta_sweep.csv"})) {
    auto r = read_file(dir / "beta_sweep.csv", read_sweep_csv);
    auto s = r.summarize("ensemble");
    auto ideal = r.summarize("ideal");
    double ideal_mean = ideal.empty() ? 0.0 : ideal.front().mean;
    auto os = emit("fig6a.csv");
    os << "config_hash,version,beta,accuracy_mean,accuracy_std,success_rate,ideal_mean\n";
    for (const auto& x : s)
      os << r.config_hash << ',' << r.version << ',' << x.x << ',' << x.mean << ',' << x.std
         << ',' << x.success_rate << ',' << ideal_mean << '\n';
    if (sol) {
      Accuracy sw{sol->ternary.accuracy[0], sol->ternary.accuracy[1]};
      for (auto& c : check_beta_sweep(r, sw)) rep.checks.push_back(c);
    } else {
      rep.missing.push_back("beta checks: solution.json");
    }
  }

  // fig6e: G_norm sweep.
  if (need("fig6e", {"gnorm_sweep.csv"})) {
    auto r = read_file(dir / "gnorm_sweep.csv", read_sweep_csv);
    auto os = emit("fig6e.csv");
    os << "config_hash,version,variant,g_norm,task1_mean,task2_mean,accuracy_mean,accuracy_std\n";
    for (const char* variant : {"ideal", "ensemble"})
      for (const auto& x : r.summarize(variant))
        os << r.config_hash << ',' << r.version << ',' << variant << ',' << x.x << ','
           << x.task1_mean << ',' << x.task2_mean << ',' << x.mean << ',' << x.std << '\n';
    if (sol) {
      for (auto& c : check_gnorm_sweep(r, sol->linear_baseline)) rep.checks.push_back(c);
    } else {
      rep.missing.push_back("g_norm checks: solution.json");
    }
  }

  auto os = open_out(dir / "summary.txt");
  os << "layer ensemble report, tool " << tool_version() << '\n';
  for (const auto& c : rep.checks)
    os << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  for (const auto& m : rep.missing) os << "MISSING " << m << '\n';
  rep.written.push_back("summary.txt");
  return rep;
}

}  // namespace lea::harness
