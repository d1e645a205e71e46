#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lea/matrix.hpp"
#include "lea/rng.hpp"

namespace lea::chip {

struct ChipGeometry {
  std::size_t n_kernels = 32;
  std::size_t rows_per_kernel = 25;
  std::size_t cols_per_kernel = 25;

  std::size_t devices_per_kernel() const { return rows_per_kernel * cols_per_kernel; }
  std::size_t total_devices() const { return n_kernels * devices_per_kernel(); }
  friend bool operator==(const ChipGeometry&, const ChipGeometry&) = default;
};

enum class Fault : int { Working = 0, StuckHigh = 1, StuckLow = 2, Shorted = 3 };
std::string fault_name(Fault f);
Fault parse_fault(const std::string& s);

/// Programmable states and device bounds, all in microsiemens; v_read in volts.
/// Currents throughout are in microamperes (uS * V).
struct ConductanceLevels {
  std::array<double, 4> levels{133.0, 167.0, 200.0, 233.0};
  double g_min = 100.0;  // device floor, where StuckLow devices sit
  double g_max = 300.0;  // device ceiling, where StuckHigh devices sit
  double v_read = 0.3;

  double g_off() const { return levels.front(); }
  double g_on() const { return levels.back(); }
  double g_shorted() const { return 10.0 * g_max; }
};

struct NoiseConfig {
  double prog_sigma = 8.0;           // uS, per programming attempt
  double read_current_sigma = 0.5;   // uA, additive per row read
  std::optional<int> adc_bits;       // off when empty
  double adc_fullscale = 250.0;      // uA, symmetric
  std::optional<int> dac_bits;       // off when empty
  std::uint64_t seed = 0;

  static NoiseConfig ideal(std::uint64_t seed = 0);
  static NoiseConfig defaults(std::uint64_t seed = 0);
  static NoiseConfig hardware_like(std::uint64_t seed = 0);

  /// Throws InvalidInput for negative sigmas or bit depths outside [4, 16].
  void validate() const;
  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct DeviceAddr {
  std::size_t kernel = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Rectangular block inside one kernel.
struct Region {
  std::size_t kernel = 0;
  std::size_t row_offset = 0;
  std::size_t col_offset = 0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
};

/// Per-device fault kinds, kernel-major.
class FaultMap {
 public:
  FaultMap() = default;
  explicit FaultMap(ChipGeometry geom)
      : geom_(geom), faults_(geom.total_devices(), Fault::Working) {}

  const ChipGeometry& geometry() const { return geom_; }
  Fault at(std::size_t k, std::size_t r, std::size_t c) const {
    return faults_[index(k, r, c)];
  }
  void set(std::size_t k, std::size_t r, std::size_t c, Fault f) {
    faults_[index(k, r, c)] = f;
  }
  bool faulty(std::size_t k, std::size_t r, std::size_t c) const {
    return at(k, r, c) != Fault::Working;
  }
  std::size_t count(std::size_t kernel) const;
  std::size_t count() const;

  friend bool operator==(const FaultMap&, const FaultMap&) = default;

 private:
  std::size_t index(std::size_t k, std::size_t r, std::size_t c) const {
    return (k * geom_.rows_per_kernel + r) * geom_.cols_per_kernel + c;
  }
  ChipGeometry geom_;
  std::vector<Fault> faults_;
};

/// CSV `kernel,row,col,fault`, one line per faulted device.
void write_fault_csv(std::ostream& os, const FaultMap& faults);

struct ProgramResult {
  bool success = false;
  int iterations = 0;
  double final_read = 0.0;
};

struct BlockProgramResult {
  BasicMatrix<std::uint8_t> success;
  Matrix achieved;  // last read-back value per device
  std::size_t n_success() const;
};

/// The 32 x 25 x 25 device array. Rows carry outputs, columns carry inputs.
/// All stochastic behavior is drawn from one engine seeded from the noise
/// config, so a chip evolves deterministically under a fixed call sequence.
class SimChip {
 public:
  static constexpr int kFormatVersion = 1;
  static constexpr int kDefaultMaxIters = 64;

  explicit SimChip(const NoiseConfig& noise = NoiseConfig::defaults(), bool ideal = false,
                   ChipGeometry geom = {}, ConductanceLevels levels = {});

  const ChipGeometry& geometry() const { return geom_; }
  const ConductanceLevels& levels() const { return levels_; }
  const NoiseConfig& noise() const { return noise_; }
  bool ideal() const { return ideal_; }
  const FaultMap& faults() const { return faults_; }

  Fault fault(const DeviceAddr& a) const;
  /// Stored conductance, no read noise.
  double conductance(const DeviceAddr& a) const;

  /// Sets exactly round(rate * devices_per_kernel) devices per kernel to
  /// `mode`, positions uniform without replacement. Returns the full map.
  const FaultMap& inject_faults(double rate, Fault mode, std::uint64_t seed);
  /// Single-device fault override, for building specific defect patterns.
  void set_fault(const DeviceAddr& a, Fault mode);
  /// Writes a raw conductance without programming. Intended for tests that
  /// perturb stuck devices.
  void force_conductance(const DeviceAddr& a, double g);

  /// Write-verify until the read-back lies within target +- theta.
  ProgramResult program_device(const DeviceAddr& a, double target, double theta,
                               int max_iters = kDefaultMaxIters);
  BlockProgramResult program_block(const Region& region, const Matrix& targets,
                                   double theta, int max_iters = kDefaultMaxIters);

  /// One noisy read per device (current noise referred to conductance).
  Matrix read_conductance_map(const Region& region);

  /// Row currents (uA) for column voltages (V) on one kernel.
  Vector kernel_vmm(std::size_t kernel, std::span<const double> col_voltages);
  /// Same, drawing noise from a caller-owned engine; does not touch chip state.
  Vector kernel_vmm(std::size_t kernel, std::span<const double> col_voltages,
                    Rng& rng) const;

  void save(std::ostream& os) const;
  static SimChip load(std::istream& is);
  void save(const std::string& path) const;
  static SimChip load(const std::string& path);

  void check_region(const Region& r) const;

 private:
  std::size_t index(const DeviceAddr& a) const;
  void check_addr(const DeviceAddr& a) const;
  double read_device(std::size_t idx, Rng& rng) const;
  double pinned_conductance(Fault f) const;

  ChipGeometry geom_;
  ConductanceLevels levels_;
  NoiseConfig noise_;
  bool ideal_ = false;
  FaultMap faults_;
  std::vector<double> g_;
  Rng rng_;
};

struct LevelsWriteResult {
  IntMatrix level_index;  // 0..3 per device
  Matrix targets;
  BlockProgramResult programmed;
};

/// Uniform random level per device of one kernel, programmed with margin theta.
LevelsWriteResult random_levels_write(SimChip& chip, std::size_t kernel,
                                      std::uint64_t seed, double theta);

inline constexpr double kDefaultTheta = 16.66;

}  // namespace lea::chip
