#include "lea/chipsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lea/errors.hpp"

namespace lea::chip {

using nlohmann::json;

std::string fault_name(Fault f) {
  switch (f) {
    case Fault::Working: return "Working";
    case Fault::StuckHigh: return "StuckHigh";
    case Fault::StuckLow: return "StuckLow";
    case Fault::Shorted: return "Shorted";
  }
  return "?";
}

Fault parse_fault(const std::string& s) {
  for (auto f : {Fault::Working, Fault::StuckHigh, Fault::StuckLow, Fault::Shorted})
    if (s == fault_name(f)) return f;
  throw InvalidInput("unknown fault kind: " + s);
}

NoiseConfig NoiseConfig::ideal(std::uint64_t seed) {
  NoiseConfig n;
  n.prog_sigma = 0.0;
  n.read_current_sigma = 0.0;
  n.seed = seed;
  return n;
}

NoiseConfig NoiseConfig::defaults(std::uint64_t seed) {
  NoiseConfig n;
  n.seed = seed;
  return n;
}

NoiseConfig NoiseConfig::hardware_like(std::uint64_t seed) {
  NoiseConfig n;
  n.adc_bits = 12;
  n.seed = seed;
  return n;
}

void NoiseConfig::validate() const {
  if (!(prog_sigma >= 0.0) || !(read_current_sigma >= 0.0))
    throw InvalidInput("noise config: sigmas must be non-negative");
  for (const auto& bits : {adc_bits, dac_bits})
    if (bits && (*bits < 4 || *bits > 16))
      throw InvalidInput("noise config: converter bits must be in [4, 16]");
  if (!(adc_fullscale > 0.0)) throw InvalidInput("noise config: adc_fullscale must be positive");
}

std::size_t FaultMap::count(std::size_t kernel) const {
  const std::size_t n = geom_.devices_per_kernel();
  return static_cast<std::size_t>(
      std::count_if(faults_.begin() + kernel * n, faults_.begin() + (kernel + 1) * n,
                    [](Fault f) { return f != Fault::Working; }));
}

std::size_t FaultMap::count() const {
  return static_cast<std::size_t>(std::count_if(
      faults_.begin(), faults_.end(), [](Fault f) { return f != Fault::Working; }));
}

void write_fault_csv(std::ostream& os, const FaultMap& faults) {
  os << "kernel,row,col,fault\n";
  const auto& g = faults.geometry();
  for (std::size_t k = 0; k < g.n_kernels; ++k)
    for (std::size_t r = 0; r < g.rows_per_kernel; ++r)
      for (std::size_t c = 0; c < g.cols_per_kernel; ++c)
        if (faults.faulty(k, r, c))
          os << k << ',' << r << ',' << c << ',' << fault_name(faults.at(k, r, c)) << '\n';
}

std::size_t BlockProgramResult::n_success() const {
  return static_cast<std::size_t>(
      std::count(success.data().begin(), success.data().end(), std::uint8_t{1}));
}

SimChip::SimChip(const NoiseConfig& noise, bool ideal, ChipGeometry geom,
                 ConductanceLevels levels)
    : geom_(geom),
      levels_(levels),
      noise_(ideal ? NoiseConfig::ideal(noise.seed) : noise),
      ideal_(ideal),
      faults_(geom),
      g_(geom.total_devices(), levels.g_min),
      rng_(noise.seed) {
  noise_.validate();
  if (geom_.total_devices() == 0) throw InvalidInput("chip geometry is empty");
}

std::size_t SimChip::index(const DeviceAddr& a) const {
  return (a.kernel * geom_.rows_per_kernel + a.row) * geom_.cols_per_kernel + a.col;
}

void SimChip::check_addr(const DeviceAddr& a) const {
  if (a.kernel >= geom_.n_kernels || a.row >= geom_.rows_per_kernel ||
      a.col >= geom_.cols_per_kernel)
    throw InvalidInput("device address out of range: (" + std::to_string(a.kernel) +
                       ", " + std::to_string(a.row) + ", " + std::to_string(a.col) + ")");
}

void SimChip::check_region(const Region& r) const {
  if (r.kernel >= geom_.n_kernels || r.row_offset + r.n_rows > geom_.rows_per_kernel ||
      r.col_offset + r.n_cols > geom_.cols_per_kernel)
    throw InvalidInput("region out of bounds on kernel " + std::to_string(r.kernel));
}

Fault SimChip::fault(const DeviceAddr& a) const {
  check_addr(a);
  return faults_.at(a.kernel, a.row, a.col);
}

double SimChip::conductance(const DeviceAddr& a) const {
  check_addr(a);
  return g_[index(a)];
}

double SimChip::pinned_conductance(Fault f) const {
  switch (f) {
    case Fault::StuckHigh: return levels_.g_max;
    case Fault::StuckLow: return levels_.g_min;
    case Fault::Shorted: return levels_.g_shorted();
    case Fault::Working: break;
  }
  return levels_.g_min;
}

void SimChip::set_fault(const DeviceAddr& a, Fault mode) {
  check_addr(a);
  faults_.set(a.kernel, a.row, a.col, mode);
  if (mode != Fault::Working) g_[index(a)] = pinned_conductance(mode);
}

void SimChip::force_conductance(const DeviceAddr& a, double g) {
  check_addr(a);
  g_[index(a)] = g;
}

const FaultMap& SimChip::inject_faults(double rate, Fault mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidInput("inject_faults: rate must be in [0, 1]");
  const std::size_t per_kernel = geom_.devices_per_kernel();
  const auto n_faults = static_cast<std::size_t>(std::llround(rate * static_cast<double>(per_kernel)));
  Rng rng(seed);
  std::vector<std::size_t> slots(per_kernel);
  for (std::size_t k = 0; k < geom_.n_kernels; ++k) {
    std::iota(slots.begin(), slots.end(), 0);
    // Partial Fisher-Yates: the first n_faults slots are a uniform subset.
    for (std::size_t i = 0; i < n_faults; ++i) {
      const std::size_t j = i + uniform_index(rng, per_kernel - i);
      std::swap(slots[i], slots[j]);
      set_fault({k, slots[i] / geom_.cols_per_kernel, slots[i] % geom_.cols_per_kernel}, mode);
    }
  }
  return faults_;
}

double SimChip::read_device(std::size_t idx, Rng& rng) const {
  const double sigma_g = noise_.read_current_sigma / levels_.v_read;
  if (sigma_g == 0.0) return g_[idx];
  return g_[idx] + sigma_g * standard_normal(rng);
}

ProgramResult SimChip::program_device(const DeviceAddr& a, double target, double theta,
                                      int max_iters) {
  check_addr(a);
  if (!(theta > 0.0)) throw InvalidInput("program_device: margin must be positive");
  if (max_iters < 1) throw InvalidInput("program_device: max_iters must be >= 1");
  if (target < levels_.g_off() || target > levels_.g_on())
    throw InvalidInput("program_device: target outside the level span");

  const std::size_t idx = index(a);
  const bool working = faults_.at(a.kernel, a.row, a.col) == Fault::Working;
  ProgramResult res;
  for (res.iterations = 1; res.iterations <= max_iters; ++res.iterations) {
    if (working) {
      const double drawn = noise_.prog_sigma > 0.0
                               ? target + noise_.prog_sigma * standard_normal(rng_)
                               : target;
      g_[idx] = std::clamp(drawn, levels_.g_min, levels_.g_max);
    }
    res.final_read = read_device(idx, rng_);
    if (std::abs(res.final_read - target) <= theta) {
      res.success = true;
      return res;
    }
  }
  res.iterations = max_iters;
  return res;
}

BlockProgramResult SimChip::program_block(const Region& region, const Matrix& targets,
                                          double theta, int max_iters) {
  check_region(region);
  if (targets.rows() != region.n_rows || targets.cols() != region.n_cols)
    throw InvalidInput("program_block: target shape does not match the region");
  BlockProgramResult out{BasicMatrix<std::uint8_t>(region.n_rows, region.n_cols, 0),
                         Matrix(region.n_rows, region.n_cols)};
  for (std::size_t r = 0; r < region.n_rows; ++r)
    for (std::size_t c = 0; c < region.n_cols; ++c) {
      const auto res = program_device(
          {region.kernel, region.row_offset + r, region.col_offset + c}, targets(r, c),
          theta, max_iters);
      out.success(r, c) = res.success ? 1 : 0;
      out.achieved(r, c) = res.final_read;
    }
  return out;
}

Matrix SimChip::read_conductance_map(const Region& region) {
  check_region(region);
  Matrix out(region.n_rows, region.n_cols);
  for (std::size_t r = 0; r < region.n_rows; ++r)
    for (std::size_t c = 0; c < region.n_cols; ++c)
      out(r, c) = read_device(
          index({region.kernel, region.row_offset + r, region.col_offset + c}), rng_);
  return out;
}

Vector SimChip::kernel_vmm(std::size_t kernel, std::span<const double> col_voltages) {
  return kernel_vmm(kernel, col_voltages, rng_);
}

Vector SimChip::kernel_vmm(std::size_t kernel, std::span<const double> col_voltages,
                           Rng& rng) const {
  if (kernel >= geom_.n_kernels) throw InvalidInput("kernel_vmm: kernel id out of range");
  if (col_voltages.size() != geom_.cols_per_kernel)
    throw InvalidInput("kernel_vmm: expected one voltage per column");

  const double vmax = levels_.v_read;
  Vector v(col_voltages.begin(), col_voltages.end());
  for (double& x : v) {
    if (!std::isfinite(x) || std::abs(x) > vmax * (1.0 + 1e-12))
      throw InvalidInput("kernel_vmm: voltage outside [-v_read, v_read]");
    if (noise_.dac_bits) {
      const double lsb = 2.0 * vmax / static_cast<double>((1 << *noise_.dac_bits) - 1);
      x = std::clamp(std::round(x / lsb) * lsb, -vmax, vmax);
    }
  }

  Vector currents(geom_.rows_per_kernel, 0.0);
  const std::size_t base = kernel * geom_.devices_per_kernel();
  for (std::size_t r = 0; r < geom_.rows_per_kernel; ++r) {
    const double* g = g_.data() + base + r * geom_.cols_per_kernel;
    double acc = 0.0;
    for (std::size_t c = 0; c < geom_.cols_per_kernel; ++c) acc += g[c] * v[c];
    if (noise_.read_current_sigma > 0.0) acc += noise_.read_current_sigma * standard_normal(rng);
    if (noise_.adc_bits) {
      const double fs = noise_.adc_fullscale;
      const double lsb = 2.0 * fs / static_cast<double>(1 << *noise_.adc_bits);
      acc = std::clamp(std::round(acc / lsb) * lsb, -fs, fs);
    }
    currents[r] = acc;
  }
  return currents;
}

namespace {

json noise_to_json(const NoiseConfig& n) {
  json j{{"prog_sigma", n.prog_sigma},
         {"read_current_sigma", n.read_current_sigma},
         {"adc_fullscale", n.adc_fullscale},
         {"seed", n.seed}};
  j["adc_bits"] = n.adc_bits ? json(*n.adc_bits) : json(nullptr);
  j["dac_bits"] = n.dac_bits ? json(*n.dac_bits) : json(nullptr);
  return j;
}

NoiseConfig noise_from_json(const json& j) {
  NoiseConfig n;
  n.prog_sigma = j.at("prog_sigma").get<double>();
  n.read_current_sigma = j.at("read_current_sigma").get<double>();
  n.adc_fullscale = j.at("adc_fullscale").get<double>();
  n.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("adc_bits").is_null()) n.adc_bits = j.at("adc_bits").get<int>();
  if (!j.at("dac_bits").is_null()) n.dac_bits = j.at("dac_bits").get<int>();
  return n;
}

}  // namespace

void SimChip::save(std::ostream& os) const {
  json j;
  j["version"] = kFormatVersion;
  j["geometry"] = {{"n_kernels", geom_.n_kernels},
                   {"rows_per_kernel", geom_.rows_per_kernel},
                   {"cols_per_kernel", geom_.cols_per_kernel}};
  j["levels"] = {{"levels", levels_.levels},
                 {"g_min", levels_.g_min},
                 {"g_max", levels_.g_max},
                 {"v_read", levels_.v_read}};
  j["noise"] = noise_to_json(noise_);
  j["ideal"] = ideal_;
  std::vector<int> faults(geom_.total_devices());
  for (std::size_t k = 0, i = 0; k < geom_.n_kernels; ++k)
    for (std::size_t r = 0; r < geom_.rows_per_kernel; ++r)
      for (std::size_t c = 0; c < geom_.cols_per_kernel; ++c, ++i)
        faults[i] = static_cast<int>(faults_.at(k, r, c));
  j["devices"] = {{"fault", faults}, {"conductance", g_}};
  std::ostringstream state;
  state << rng_;
  j["rng"] = {{"seed", noise_.seed}, {"state", state.str()}};
  os << j.dump() << '\n';
}

SimChip SimChip::load(std::istream& is) {
  try {
    const json j = json::parse(is);
    if (j.at("version").get<int>() != kFormatVersion)
      throw InvalidInput("chip file: unsupported version " + j.at("version").dump());
    ChipGeometry geom{j.at("geometry").at("n_kernels").get<std::size_t>(),
                      j.at("geometry").at("rows_per_kernel").get<std::size_t>(),
                      j.at("geometry").at("cols_per_kernel").get<std::size_t>()};
    ConductanceLevels lv;
    lv.levels = j.at("levels").at("levels").get<std::array<double, 4>>();
    lv.g_min = j.at("levels").at("g_min").get<double>();
    lv.g_max = j.at("levels").at("g_max").get<double>();
    lv.v_read = j.at("levels").at("v_read").get<double>();
    SimChip chip(noise_from_json(j.at("noise")), j.at("ideal").get<bool>(), geom, lv);

    const auto faults = j.at("devices").at("fault").get<std::vector<int>>();
    auto g = j.at("devices").at("conductance").get<std::vector<double>>();
    if (faults.size() != geom.total_devices() || g.size() != geom.total_devices())
      throw InvalidInput("chip file: device arrays do not match the geometry");
    for (std::size_t k = 0, i = 0; k < geom.n_kernels; ++k)
      for (std::size_t r = 0; r < geom.rows_per_kernel; ++r)
        for (std::size_t c = 0; c < geom.cols_per_kernel; ++c, ++i) {
          if (faults[i] < 0 || faults[i] > 3) throw InvalidInput("chip file: bad fault code");
          chip.faults_.set(k, r, c, static_cast<Fault>(faults[i]));
        }
    chip.g_ = std::move(g);
    std::istringstream state(j.at("rng").at("state").get<std::string>());
    state >> chip.rng_;
    if (!state) throw InvalidInput("chip file: corrupt rng state");
    return chip;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("chip file: malformed: ") + e.what());
  }
}

void SimChip::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write " + path);
  save(os);
}

SimChip SimChip::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read " + path);
  return load(is);
}

LevelsWriteResult random_levels_write(SimChip& chip, std::size_t kernel, std::uint64_t seed,
                                      double theta) {
  const auto& g = chip.geometry();
  if (kernel >= g.n_kernels) throw InvalidInput("random_levels_write: kernel out of range");
  Rng rng(seed);
  LevelsWriteResult out;
  out.level_index = IntMatrix(g.rows_per_kernel, g.cols_per_kernel);
  out.targets = Matrix(g.rows_per_kernel, g.cols_per_kernel);
  for (std::size_t r = 0; r < g.rows_per_kernel; ++r)
    for (std::size_t c = 0; c < g.cols_per_kernel; ++c) {
      const auto lvl = static_cast<int>(uniform_index(rng, chip.levels().levels.size()));
      out.level_index(r, c) = lvl;
      out.targets(r, c) = chip.levels().levels[lvl];
    }
  out.programmed =
      chip.program_block({kernel, 0, 0, g.rows_per_kernel, g.cols_per_kernel}, out.targets, theta);
  return out;
}

}  // namespace lea::chip
