#include "lea/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "lea/errors.hpp"

namespace lea::ensemble {

using chip::FaultMap;
using chip::Region;

std::string polarity_name(Polarity p) { return p == Polarity::Pos ? "pos" : "neg"; }

bool Placement::overlaps(const Region& r) const {
  return kernel_id == r.kernel && row_offset < r.row_offset + r.n_rows &&
         r.row_offset < row_offset + n_rows && col_offset < r.col_offset + r.n_cols &&
         r.col_offset < col_offset + n_cols;
}

void PolarityEnsemble::recount() {
  clean_counts.assign(clean_mask.cols(), 0);
  for (std::size_t a = 0; a < clean_mask.rows(); ++a)
    for (std::size_t j = 0; j < clean_mask.cols(); ++j) clean_counts[j] += clean_mask(a, j);
}

bool EnsembleMapping::beta_satisfied() const {
  for (const auto& pe : polarity) {
    if (pe.clean_counts.size() != shape.n_outputs) return false;
    for (std::size_t c : pe.clean_counts)
      if (c < beta) return false;
  }
  return true;
}

std::size_t EnsembleMapping::device_count() const {
  std::size_t n = 0;
  for (const auto& pe : polarity)
    for (const auto& p : pe.placements) n += p.n_rows * p.n_cols;
  return n;
}

std::vector<Region> EnsembleMapping::regions() const {
  std::vector<Region> out;
  for (const auto& pe : polarity)
    for (const auto& p : pe.placements) out.push_back(p.region());
  return out;
}

LayerShape hardware_shape(const IntMatrix& ternary) {
  return {ternary.cols(), ternary.rows()};
}

DifferentialTargets encode_differential(const IntMatrix& ternary,
                                        const chip::ConductanceLevels& levels) {
  const double on = levels.g_on();
  const double off = levels.g_off();
  DifferentialTargets t{Matrix(ternary.cols(), ternary.rows()),
                        Matrix(ternary.cols(), ternary.rows())};
  for (std::size_t i = 0; i < ternary.rows(); ++i)
    for (std::size_t o = 0; o < ternary.cols(); ++o) {
      switch (ternary(i, o)) {
        case 1: t.g_pos(o, i) = on; t.g_neg(o, i) = off; break;
        case 0: t.g_pos(o, i) = on; t.g_neg(o, i) = on; break;
        case -1: t.g_pos(o, i) = off; t.g_neg(o, i) = on; break;
        default:
          throw InvalidInput("encode_differential: entry " + std::to_string(ternary(i, o)) +
                             " is not ternary");
      }
    }
  return t;
}

namespace {

// Fault and occupancy lookups for the greedy planner.
class PlanGrid {
 public:
  explicit PlanGrid(const FaultMap& faults)
      : geom_(faults.geometry()),
        row_faults_(geom_.n_kernels * geom_.rows_per_kernel * (geom_.cols_per_kernel + 1), 0),
        occupied_(geom_.total_devices(), 0),
        occ_prefix_(geom_.n_kernels * (geom_.rows_per_kernel + 1) * (geom_.cols_per_kernel + 1), 0) {
    for (std::size_t k = 0; k < geom_.n_kernels; ++k)
      for (std::size_t r = 0; r < geom_.rows_per_kernel; ++r)
        for (std::size_t c = 0; c < geom_.cols_per_kernel; ++c)
          row_faults_[rf(k, r, c + 1)] = row_faults_[rf(k, r, c)] + (faults.faulty(k, r, c) ? 1 : 0);
  }

  bool row_clean(std::size_t k, std::size_t r, std::size_t c0, std::size_t n) const {
    return row_faults_[rf(k, r, c0 + n)] == row_faults_[rf(k, r, c0)];
  }

  bool free(std::size_t k, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    const int s = op(k, r0 + nr, c0 + nc) - op(k, r0, c0 + nc) - op(k, r0 + nr, c0) + op(k, r0, c0);
    return s == 0;
  }

  void occupy(const Region& reg) {
    if (reg.kernel >= geom_.n_kernels) return;
    const std::size_t r1 = std::min(reg.row_offset + reg.n_rows, geom_.rows_per_kernel);
    const std::size_t c1 = std::min(reg.col_offset + reg.n_cols, geom_.cols_per_kernel);
    for (std::size_t r = reg.row_offset; r < r1; ++r)
      for (std::size_t c = reg.col_offset; c < c1; ++c)
        occupied_[(reg.kernel * geom_.rows_per_kernel + r) * geom_.cols_per_kernel + c] = 1;
    rebuild(reg.kernel);
  }

 private:
  std::size_t rf(std::size_t k, std::size_t r, std::size_t c) const {
    return (k * geom_.rows_per_kernel + r) * (geom_.cols_per_kernel + 1) + c;
  }
  std::size_t opi(std::size_t k, std::size_t r, std::size_t c) const {
    return (k * (geom_.rows_per_kernel + 1) + r) * (geom_.cols_per_kernel + 1) + c;
  }
  int op(std::size_t k, std::size_t r, std::size_t c) const { return occ_prefix_[opi(k, r, c)]; }

  void rebuild(std::size_t k) {
    for (std::size_t r = 0; r < geom_.rows_per_kernel; ++r)
      for (std::size_t c = 0; c < geom_.cols_per_kernel; ++c)
        occ_prefix_[opi(k, r + 1, c + 1)] =
            occupied_[(k * geom_.rows_per_kernel + r) * geom_.cols_per_kernel + c] +
            op(k, r, c + 1) + op(k, r + 1, c) - op(k, r, c);
  }

  chip::ChipGeometry geom_;
  std::vector<int> row_faults_;
  std::vector<std::uint8_t> occupied_;
  std::vector<int> occ_prefix_;
};

PolarityEnsemble plan_polarity(PlanGrid& grid, const chip::ChipGeometry& geom, LayerShape shape,
                               std::size_t beta, Polarity pol) {
  PolarityEnsemble pe;
  std::vector<std::size_t> counts(shape.n_outputs, 0);
  std::vector<std::vector<std::uint8_t>> mask_rows;

  for (;;) {
    if (std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return c >= beta; }))
      break;
    std::size_t best_score = 0;
    Placement best;
    for (std::size_t k = 0; k < geom.n_kernels; ++k)
      for (std::size_t r = 0; r + shape.n_outputs <= geom.rows_per_kernel; ++r)
        for (std::size_t c = 0; c + shape.n_inputs <= geom.cols_per_kernel; ++c) {
          if (!grid.free(k, r, c, shape.n_outputs, shape.n_inputs)) continue;
          std::size_t score = 0;
          for (std::size_t j = 0; j < shape.n_outputs; ++j)
            if (counts[j] < beta && grid.row_clean(k, r + j, c, shape.n_inputs)) ++score;
          if (score > best_score) {
            best_score = score;
            best = {k, r, c, shape.n_outputs, shape.n_inputs, pol, 0};
          }
        }
    if (best_score == 0) break;

    best.copy_index = pe.placements.size();
    std::vector<std::uint8_t> mask(shape.n_outputs, 0);
    for (std::size_t j = 0; j < shape.n_outputs; ++j)
      if (grid.row_clean(best.kernel_id, best.row_offset + j, best.col_offset, shape.n_inputs)) {
        mask[j] = 1;
        ++counts[j];
      }
    grid.occupy(best.region());
    pe.placements.push_back(best);
    mask_rows.push_back(std::move(mask));
  }

  pe.clean_mask = BasicMatrix<std::uint8_t>(mask_rows.size(), shape.n_outputs, 0);
  for (std::size_t a = 0; a < mask_rows.size(); ++a)
    for (std::size_t j = 0; j < shape.n_outputs; ++j) pe.clean_mask(a, j) = mask_rows[a][j];
  pe.recount();
  return pe;
}

}  // namespace

EnsembleMapping find_layer_ensemble(const FaultMap& faults, LayerShape shape, std::size_t beta,
                                    std::span<const Region> avoid, std::size_t layer_id) {
  const auto& geom = faults.geometry();
  if (beta < 1) throw InvalidInput("find_layer_ensemble: beta must be >= 1");
  if (shape.n_outputs == 0 || shape.n_inputs == 0 || shape.n_outputs > geom.rows_per_kernel ||
      shape.n_inputs > geom.cols_per_kernel)
    throw InvalidInput("find_layer_ensemble: layer " + std::to_string(shape.n_outputs) + "x" +
                       std::to_string(shape.n_inputs) + " does not fit in a kernel");

  PlanGrid grid(faults);
  for (const auto& r : avoid) grid.occupy(r);

  EnsembleMapping m;
  m.layer_id = layer_id;
  m.beta = beta;
  m.shape = shape;
  for (auto pol : kPolarities) m.at(pol) = plan_polarity(grid, geom, shape, beta, pol);
  m.success = m.beta_satisfied();
  return m;
}

WriteReport write_ensemble(chip::SimChip& chip, EnsembleMapping& mapping, const IntMatrix& ternary,
                           double theta) {
  const LayerShape hw = hardware_shape(ternary);
  if (hw.n_outputs != mapping.shape.n_outputs || hw.n_inputs != mapping.shape.n_inputs)
    throw InvalidInput("write_ensemble: ternary matrix does not match the mapping shape");
  const auto targets = encode_differential(ternary, chip.levels());

  WriteReport report;
  for (auto pol : kPolarities) {
    auto& pe = mapping.at(pol);
    for (const auto& p : pe.placements) {
      chip.check_region(p.region());
      const auto res = chip.program_block(p.region(), targets.at(pol), theta);
      report.devices_programmed += res.success.size();
      report.devices_failed += res.success.size() - res.n_success();
      for (std::size_t j = 0; j < p.n_rows; ++j) {
        const auto row = res.success.row(j);
        const bool failed = std::find(row.begin(), row.end(), std::uint8_t{0}) != row.end();
        if (failed && pe.clean_mask(p.copy_index, j)) {
          pe.clean_mask(p.copy_index, j) = 0;
          report.demotions.push_back({pol, p.copy_index, j});
        }
      }
    }
    pe.recount();
  }
  mapping.success = mapping.beta_satisfied();
  report.beta_holds = mapping.success;
  return report;
}

namespace {

// Shared body of both ensemble_vmm overloads; `vmm(kernel, voltages)` runs
// one kernel read.
template <typename Vmm>
AveragedCurrents masked_average(const chip::SimChip& chip, const EnsembleMapping& mapping,
                                std::span<const double> inputs, bool allow_degraded, Vmm&& vmm) {
  if (!mapping.success && !allow_degraded)
    throw RuntimeFailure("ensemble_vmm: layer " + std::to_string(mapping.layer_id + 1) +
                         " mapping is unsuccessful (fewer than beta clean copies)");
  if (inputs.size() != mapping.shape.n_inputs)
    throw InvalidInput("ensemble_vmm: input length does not match the layer");
  for (double x : inputs)
    if (!std::isfinite(x) || std::abs(x) > 1.0 + 1e-12)
      throw InvalidInput("ensemble_vmm: inputs must lie in [-1, 1]");

  const std::size_t n_cols = chip.geometry().cols_per_kernel;
  const double v_read = chip.levels().v_read;
  const std::size_t n_out = mapping.shape.n_outputs;
  AveragedCurrents out;
  for (auto pol : kPolarities) {
    const auto& pe = mapping.at(pol);

    // First beta clean copies per output, by copy index.
    std::vector<std::vector<std::size_t>> contributors(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
      for (std::size_t a = 0; a < pe.alpha() && contributors[j].size() < mapping.beta; ++a)
        if (pe.clean_mask(a, j)) contributors[j].push_back(a);
      if (contributors[j].size() < mapping.beta) {
        out.degraded = true;
        if (contributors[j].empty() && pe.alpha() > 0) contributors[j].push_back(0);
      }
    }

    std::vector<Vector> copy_currents(pe.alpha());
    for (std::size_t j = 0; j < n_out; ++j)
      for (std::size_t a : contributors[j]) {
        if (!copy_currents[a].empty()) continue;
        const auto& p = pe.placements[a];
        Vector v(n_cols, 0.0);
        for (std::size_t i = 0; i < p.n_cols; ++i) v[p.col_offset + i] = v_read * inputs[i];
        copy_currents[a] = vmm(p.kernel_id, v);
      }

    Vector avg(n_out, 0.0);
    for (std::size_t j = 0; j < n_out; ++j) {
      if (contributors[j].empty()) continue;
      double sum = 0.0;
      for (std::size_t a : contributors[j]) sum += copy_currents[a][pe.placements[a].row_offset + j];
      // Exactly beta terms on a full mapping; degraded outputs average what they have.
      avg[j] = sum / static_cast<double>(contributors[j].size());
    }
    (pol == Polarity::Pos ? out.i_pos : out.i_neg) = std::move(avg);
  }
  return out;
}

}  // namespace

AveragedCurrents ensemble_vmm(chip::SimChip& chip, const EnsembleMapping& mapping,
                              std::span<const double> inputs, bool allow_degraded) {
  return masked_average(chip, mapping, inputs, allow_degraded,
                        [&](std::size_t k, const Vector& v) { return chip.kernel_vmm(k, v); });
}

AveragedCurrents ensemble_vmm(const chip::SimChip& chip, const EnsembleMapping& mapping,
                              std::span<const double> inputs, Rng& rng, bool allow_degraded) {
  return masked_average(chip, mapping, inputs, allow_degraded,
                        [&](std::size_t k, const Vector& v) { return chip.kernel_vmm(k, v, rng); });
}

Vector decode_output(std::span<const double> i_pos, std::span<const double> i_neg,
                     const CalibrationInfo& calib, double v_read, double scale) {
  if (i_pos.size() != i_neg.size())
    throw InvalidInput("decode_output: current vectors differ in length");
  if (!(calib.g_diff_mean > 0.0) || !(calib.g_norm > 0.0) || !(v_read > 0.0))
    throw InvalidInput("decode_output: invalid calibration");
  const double denom = calib.g_norm * calib.g_diff_mean * v_read;
  Vector out(i_pos.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (!std::isfinite(i_pos[j]) || !std::isfinite(i_neg[j]))
      throw InvalidInput("decode_output: non-finite current");
    out[j] = scale * (i_pos[j] - i_neg[j]) / denom;
  }
  return out;
}

namespace {

double g_diff_over(chip::SimChip& chip, const EnsembleMapping& mapping,
                   const DifferentialTargets& targets, bool clean_only) {
  const double on = chip.levels().g_on();
  const double off = chip.levels().g_off();
  double sum_on = 0.0, sum_off = 0.0;
  std::size_t n_on = 0, n_off = 0;
  for (auto pol : kPolarities) {
    const auto& pe = mapping.at(pol);
    const auto& t = targets.at(pol);
    for (const auto& p : pe.placements) {
      const Matrix read = chip.read_conductance_map(p.region());
      for (std::size_t j = 0; j < p.n_rows; ++j) {
        if (clean_only && !pe.clean_mask(p.copy_index, j)) continue;
        for (std::size_t i = 0; i < p.n_cols; ++i) {
          if (t(j, i) == on) {
            sum_on += read(j, i);
            ++n_on;
          } else if (t(j, i) == off) {
            sum_off += read(j, i);
            ++n_off;
          }
        }
      }
    }
  }
  if (n_on == 0 || n_off == 0)
    throw RuntimeFailure("measure_g_diff: layer " + std::to_string(mapping.layer_id + 1) +
                         " has no clean devices targeted at both G_ON and G_OFF");
  return sum_on / static_cast<double>(n_on) - sum_off / static_cast<double>(n_off);
}

}  // namespace

double measure_g_diff(chip::SimChip& chip, const EnsembleMapping& mapping,
                      const DifferentialTargets& targets) {
  return g_diff_over(chip, mapping, targets, true);
}

bool EnsembleNetwork::all_successful() const {
  return std::all_of(mappings.begin(), mappings.end(),
                     [](const EnsembleMapping& m) { return m.success; });
}

void EnsembleNetwork::set_g_norm(double g_norm) {
  for (auto& c : calibration) c.g_norm = g_norm;
}

namespace {

template <typename LayerVmm>
EnsembleForward forward_impl(const EnsembleNetwork& net, std::span<const double> features,
                             LayerVmm&& layer_vmm) {
  const std::size_t n_layers = net.mappings.size();
  if (n_layers == 0 || net.calibration.size() != n_layers ||
      net.solution.ternary.size() != n_layers)
    throw InvalidInput("ensemble_forward: network is not deployed");
  if (features.size() != net.mappings.front().shape.n_inputs)
    throw InvalidInput("ensemble_forward: wrong feature count");

  EnsembleForward out;
  Vector x(features.begin(), features.end());
  for (double& v : x) v *= net.input_scale;
  double restore = 1.0 / net.input_scale;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto cur = layer_vmm(net.mappings[l], x);
    out.degraded = out.degraded || cur.degraded;
    Vector z = decode_output(cur.i_pos, cur.i_neg, net.calibration[l], net.v_read,
                             net.solution.scales[l] * restore);
    restore = 1.0;
    out.decoded.push_back(z);
    if (l + 1 < n_layers) {
      for (double& v : z) v = std::tanh(v);
      x = std::move(z);
    } else {
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
      }
      for (double& v : z) v /= sum;
      out.probabilities = std::move(z);
    }
  }
  return out;
}

}  // namespace

EnsembleForward ensemble_forward(chip::SimChip& chip, const EnsembleNetwork& net,
                                 std::span<const double> features, bool allow_degraded) {
  return forward_impl(net, features, [&](const EnsembleMapping& m, const Vector& x) {
    return ensemble_vmm(chip, m, x, allow_degraded);
  });
}

EnsembleForward ensemble_forward(const chip::SimChip& chip, const EnsembleNetwork& net,
                                 std::span<const double> features, Rng& rng,
                                 bool allow_degraded) {
  return forward_impl(net, features, [&](const EnsembleMapping& m, const Vector& x) {
    return ensemble_vmm(chip, m, x, rng, allow_degraded);
  });
}

EnsembleStats ensemble_stats(std::span<const EnsembleMapping> mappings) {
  EnsembleStats st;
  for (const auto& m : mappings) {
    st.alpha.push_back({m.at(Polarity::Pos).alpha(), m.at(Polarity::Neg).alpha()});
    st.total_devices += m.device_count();
  }
  return st;
}

std::vector<EnsembleMapping> plan_network(const FaultMap& faults,
                                          const nn::TernarySolution& solution, std::size_t beta) {
  std::vector<EnsembleMapping> out;
  std::vector<Region> avoid;
  for (std::size_t l = 0; l < solution.ternary.size(); ++l) {
    out.push_back(find_layer_ensemble(faults, hardware_shape(solution.ternary[l]), beta, avoid, l));
    for (const auto& r : out.back().regions()) avoid.push_back(r);
  }
  return out;
}

void calibrate(chip::SimChip& chip, EnsembleNetwork& net, double g_norm) {
  net.calibration.clear();
  for (std::size_t l = 0; l < net.mappings.size(); ++l) {
    const auto targets = encode_differential(net.solution.ternary[l], chip.levels());
    double g_diff;
    try {
      g_diff = g_diff_over(chip, net.mappings[l], targets, true);
    } catch (const RuntimeFailure&) {
      // Degraded layer without clean rows of both kinds: use every mapped row.
      g_diff = g_diff_over(chip, net.mappings[l], targets, false);
    }
    net.calibration.push_back({g_diff, g_norm});
  }
}

EnsembleNetwork deploy(chip::SimChip& chip, const nn::TernarySolution& solution, std::size_t beta,
                       double theta, double g_norm, DeployReport* report) {
  EnsembleNetwork net;
  net.solution = solution;
  net.v_read = chip.levels().v_read;
  net.mappings = plan_network(chip.faults(), solution, beta);
  if (report) report->planning_success = net.all_successful();
  for (std::size_t l = 0; l < net.mappings.size(); ++l) {
    auto w = write_ensemble(chip, net.mappings[l], solution.ternary[l], theta);
    if (report) report->writes.push_back(std::move(w));
  }
  calibrate(chip, net, g_norm);
  return net;
}

namespace {

using nlohmann::json;

json mapping_to_json(const EnsembleMapping& m) {
  json j{{"layer_id", m.layer_id},
         {"beta", m.beta},
         {"n_outputs", m.shape.n_outputs},
         {"n_inputs", m.shape.n_inputs},
         {"success", m.success}};
  for (auto pol : kPolarities) {
    const auto& pe = m.at(pol);
    json placements = json::array();
    for (const auto& p : pe.placements)
      placements.push_back({{"kernel_id", p.kernel_id},
                            {"row_offset", p.row_offset},
                            {"col_offset", p.col_offset},
                            {"n_rows", p.n_rows},
                            {"n_cols", p.n_cols},
                            {"copy_index", p.copy_index}});
    json mask = json::array();
    for (std::size_t a = 0; a < pe.clean_mask.rows(); ++a) {
      std::vector<int> row;
      for (auto v : pe.clean_mask.row(a)) row.push_back(v);
      mask.push_back(row);
    }
    j[polarity_name(pol)] = {{"placements", placements},
                             {"clean_mask", mask},
                             {"clean_counts", pe.clean_counts}};
  }
  return j;
}

EnsembleMapping mapping_from_json(const json& j) {
  EnsembleMapping m;
  m.layer_id = j.at("layer_id").get<std::size_t>();
  m.beta = j.at("beta").get<std::size_t>();
  m.shape = {j.at("n_outputs").get<std::size_t>(), j.at("n_inputs").get<std::size_t>()};
  for (auto pol : kPolarities) {
    const auto& jp = j.at(polarity_name(pol));
    auto& pe = m.at(pol);
    for (const auto& p : jp.at("placements"))
      pe.placements.push_back({p.at("kernel_id").get<std::size_t>(),
                               p.at("row_offset").get<std::size_t>(),
                               p.at("col_offset").get<std::size_t>(),
                               p.at("n_rows").get<std::size_t>(),
                               p.at("n_cols").get<std::size_t>(), pol,
                               p.at("copy_index").get<std::size_t>()});
    const auto& mask = jp.at("clean_mask");
    if (mask.size() != pe.placements.size())
      throw InvalidInput("mapping file: clean mask does not match the placements");
    pe.clean_mask = BasicMatrix<std::uint8_t>(pe.placements.size(), m.shape.n_outputs, 0);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      const auto row = mask[a].get<std::vector<int>>();
      if (row.size() != m.shape.n_outputs)
        throw InvalidInput("mapping file: clean mask row has the wrong length");
      for (std::size_t o = 0; o < row.size(); ++o) pe.clean_mask(a, o) = row[o] != 0;
    }
    for (std::size_t a = 0; a < pe.placements.size(); ++a)
      if (pe.placements[a].copy_index != a)
        throw InvalidInput("mapping file: copy indices must be 0..alpha-1 in order");
    pe.recount();
  }
  m.success = m.beta_satisfied();
  if (j.at("success").get<bool>() != m.success)
    throw InvalidInput("mapping file: success flag disagrees with the clean counts");
  return m;
}

}  // namespace

void save_mappings(std::ostream& os, std::span<const EnsembleMapping> mappings) {
  json j = json::array();
  for (const auto& m : mappings) j.push_back(mapping_to_json(m));
  os << json{{"layers", j}}.dump(1) << '\n';
}

std::vector<EnsembleMapping> load_mappings(std::istream& is) {
  try {
    const json j = json::parse(is);
    std::vector<EnsembleMapping> out;
    for (const auto& m : j.at("layers")) out.push_back(mapping_from_json(m));
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("mapping file: malformed: ") + e.what());
  }
}

void save_calibration(std::ostream& os, std::span<const CalibrationInfo> calib) {
  json layers = json::array();
  for (std::size_t l = 0; l < calib.size(); ++l)
    layers.push_back({{"layer_id", l}, {"g_diff_mean", calib[l].g_diff_mean}, {"g_norm", calib[l].g_norm}});
  os << json{{"layers", layers}}.dump(1) << '\n';
}

std::vector<CalibrationInfo> load_calibration(std::istream& is) {
  try {
    const json j = json::parse(is);
    std::vector<CalibrationInfo> out;
    for (const auto& l : j.at("layers")) {
      CalibrationInfo c{l.at("g_diff_mean").get<double>(), l.at("g_norm").get<double>()};
      if (!(c.g_diff_mean > 0.0) || !(c.g_norm > 0.0))
        throw InvalidInput("calibration file: g_diff_mean and g_norm must be positive");
      out.push_back(c);
    }
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("calibration file: malformed: ") + e.what());
  }
}

}  // namespace lea::ensemble
