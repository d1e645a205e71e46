#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lea/chipsim.hpp"
#include "lea/matrix.hpp"
#include "lea/neuralnet.hpp"

namespace lea::ensemble {

enum class Polarity : int { Pos = 0, Neg = 1 };
inline constexpr std::array<Polarity, 2> kPolarities{Polarity::Pos, Polarity::Neg};
std::string polarity_name(Polarity p);

/// Hardware shape of a layer: outputs on rows, inputs on columns.
struct LayerShape {
  std::size_t n_outputs = 0;
  std::size_t n_inputs = 0;
};

/// One copy of G_pos or G_neg placed on a contiguous block of one kernel.
/// Output j of the layer sits on row row_offset + j.
struct Placement {
  std::size_t kernel_id = 0;
  std::size_t row_offset = 0;
  std::size_t col_offset = 0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  Polarity polarity = Polarity::Pos;
  std::size_t copy_index = 0;

  chip::Region region() const { return {kernel_id, row_offset, col_offset, n_rows, n_cols}; }
  bool overlaps(const chip::Region& r) const;
};

/// All copies of one polarity. clean_mask(copy, output) is true when that row
/// of that copy contains no defective device.
struct PolarityEnsemble {
  std::vector<Placement> placements;
  BasicMatrix<std::uint8_t> clean_mask;  // alpha x n_outputs
  std::vector<std::size_t> clean_counts;

  std::size_t alpha() const { return placements.size(); }
  void recount();
};

struct EnsembleMapping {
  std::size_t layer_id = 0;
  std::size_t beta = 1;
  LayerShape shape;
  std::array<PolarityEnsemble, 2> polarity;
  bool success = false;

  const PolarityEnsemble& at(Polarity p) const { return polarity[static_cast<int>(p)]; }
  PolarityEnsemble& at(Polarity p) { return polarity[static_cast<int>(p)]; }
  /// Every output has >= beta clean copies in both polarities.
  bool beta_satisfied() const;
  std::size_t device_count() const;
  std::vector<chip::Region> regions() const;
};

struct CalibrationInfo {
  double g_diff_mean = 0.0;  // uS, measured G_ON - G_OFF over the layer's devices
  double g_norm = 1.0;
};

/// Differential conductance targets, out-rows x in-cols.
struct DifferentialTargets {
  Matrix g_pos;
  Matrix g_neg;
  const Matrix& at(Polarity p) const { return p == Polarity::Pos ? g_pos : g_neg; }
};

/// +1 -> (G_ON, G_OFF), 0 -> (G_ON, G_ON), -1 -> (G_OFF, G_ON), transposed so
/// that an (in x out) ternary matrix becomes (out x in) blocks.
DifferentialTargets encode_differential(const IntMatrix& ternary,
                                        const chip::ConductanceLevels& levels = {});

/// Greedy beta-clean-row planner. G_pos copies are planned first, then G_neg
/// with the G_pos placements added to the avoid set. Returns a partial mapping
/// with success == false when no candidate improves the clean counts.
EnsembleMapping find_layer_ensemble(const chip::FaultMap& faults, LayerShape shape,
                                    std::size_t beta,
                                    std::span<const chip::Region> avoid = {},
                                    std::size_t layer_id = 0);

struct Demotion {
  Polarity polarity = Polarity::Pos;
  std::size_t copy_index = 0;
  std::size_t output = 0;
};

struct WriteReport {
  std::vector<Demotion> demotions;
  std::size_t devices_programmed = 0;
  std::size_t devices_failed = 0;
  bool beta_holds = false;
};

/// Programs every copy and demotes row copies with failed devices.
WriteReport write_ensemble(chip::SimChip& chip, EnsembleMapping& mapping,
                           const IntMatrix& ternary, double theta = chip::kDefaultTheta);

struct AveragedCurrents {
  Vector i_pos;  // uA
  Vector i_neg;
  bool degraded = false;  // some output averaged fewer than beta clean rows
};

/// Masked current averaging. Refuses an unsuccessful mapping unless
/// allow_degraded is set, in which case outputs with fewer than beta clean
/// copies average what is available (or fall back to the first raw row).
AveragedCurrents ensemble_vmm(chip::SimChip& chip, const EnsembleMapping& mapping,
                              std::span<const double> inputs, bool allow_degraded = false);
AveragedCurrents ensemble_vmm(const chip::SimChip& chip, const EnsembleMapping& mapping,
                              std::span<const double> inputs, Rng& rng,
                              bool allow_degraded = false);

/// (I_pos - I_neg) / (g_norm * g_diff_mean * v_read), times scale.
Vector decode_output(std::span<const double> i_pos, std::span<const double> i_neg,
                     const CalibrationInfo& calib, double v_read, double scale = 1.0);

/// Mean read-back of G_ON-targeted devices minus mean of G_OFF-targeted ones,
/// over the clean rows of the mapping.
double measure_g_diff(chip::SimChip& chip, const EnsembleMapping& mapping,
                      const DifferentialTargets& targets);

struct EnsembleNetwork {
  nn::TernarySolution solution;
  std::vector<EnsembleMapping> mappings;
  std::vector<CalibrationInfo> calibration;
  double v_read = 0.3;
  double input_scale = 0.5;  // features in [0, 2] -> [0, 1]

  bool all_successful() const;
  void set_g_norm(double g_norm);
};

struct EnsembleForward {
  Vector probabilities;
  std::vector<Vector> decoded;  // per layer, before the activation
  bool degraded = false;
};

EnsembleForward ensemble_forward(chip::SimChip& chip, const EnsembleNetwork& net,
                                 std::span<const double> features, bool allow_degraded = false);
EnsembleForward ensemble_forward(const chip::SimChip& chip, const EnsembleNetwork& net,
                                 std::span<const double> features, Rng& rng,
                                 bool allow_degraded = false);

struct EnsembleStats {
  std::vector<std::array<std::size_t, 2>> alpha;  // per layer, [pos, neg]
  std::size_t total_devices = 0;
};
EnsembleStats ensemble_stats(std::span<const EnsembleMapping> mappings);

/// Plans all layers in order, each avoiding the earlier layers' placements.
std::vector<EnsembleMapping> plan_network(const chip::FaultMap& faults,
                                          const nn::TernarySolution& solution,
                                          std::size_t beta);

struct DeployReport {
  std::vector<WriteReport> writes;
  bool planning_success = false;
};

/// Plan, write, and calibrate every layer.
EnsembleNetwork deploy(chip::SimChip& chip, const nn::TernarySolution& solution,
                       std::size_t beta, double theta = chip::kDefaultTheta,
                       double g_norm = 1.0, DeployReport* report = nullptr);

/// Calibrates an already-written network: one g_diff measurement per layer.
void calibrate(chip::SimChip& chip, EnsembleNetwork& net, double g_norm = 1.0);

LayerShape hardware_shape(const IntMatrix& ternary);

// JSON persistence.
void save_mappings(std::ostream& os, std::span<const EnsembleMapping> mappings);
std::vector<EnsembleMapping> load_mappings(std::istream& is);
void save_calibration(std::ostream& os, std::span<const CalibrationInfo> calib);
std::vector<CalibrationInfo> load_calibration(std::istream& is);

}  // namespace lea::ensemble
