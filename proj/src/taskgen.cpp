#include "lea/taskgen.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "lea/errors.hpp"
#include "lea/rng.hpp"

namespace lea::taskgen {

namespace {

double dist(double x, double y, const std::array<double, 2>& p) {
  return std::hypot(x - p[0], y - p[1]);
}

}  // namespace

void YinYangGeometry::validate() const {
  if (!(r_big > 0.0) || !(r_small > 0.0) || !(r_small < r_big / 2.0))
    throw InvalidInput("yin-yang geometry: need 0 < r_small < r_big / 2");
  if (dist(left_dot[0], left_dot[1], center) >= r_big ||
      dist(right_dot[0], right_dot[1], center) >= r_big)
    throw InvalidInput("yin-yang geometry: dots must lie inside the big circle");
  const double mirror = 2.0 * center[0] - left_dot[0];
  if (std::abs(mirror - right_dot[0]) > 1e-12 ||
      std::abs(left_dot[1] - right_dot[1]) > 1e-12)
    throw InvalidInput("yin-yang geometry: dots must be mirror-symmetric");
}

std::optional<Label> classify_point(double x, double y,
                                    const YinYangGeometry& geom) {
  if (dist(x, y, geom.center) > geom.r_big) return std::nullopt;

  const double d_right = dist(x, y, geom.right_dot);
  const double d_left = dist(x, y, geom.left_dot);
  if (d_right <= geom.r_small || d_left <= geom.r_small) return Label::Dot;

  // Yin: left inner half-disc, plus the upper half outside the right inner
  // half-disc.
  const double r_mid = 0.5 * geom.r_big;
  const bool in_left_mid = d_left <= r_mid;
  const bool upper_outside_right = y > geom.center[1] && d_right > r_mid;
  return (in_left_mid || upper_outside_right) ? Label::Yin : Label::Yang;
}

Features featurize(double x, double y, Task task) {
  const double off = task == Task::Task2 ? 1.0 : 0.0;
  return {x + off, y + off, (1.0 - x) + off, (1.0 - y) + off};
}

std::vector<Sample> sample_task(Task task, std::size_t n, std::uint64_t seed,
                                const YinYangGeometry& geom) {
  if (n == 0) throw InvalidInput("sample_task: n must be positive");
  geom.validate();
  Rng rng(seed);
  const double lo_x = geom.center[0] - geom.r_big;
  const double lo_y = geom.center[1] - geom.r_big;
  const double span = 2.0 * geom.r_big;

  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto goal = static_cast<Label>(i % kNumClasses);
    for (;;) {
      const double x = lo_x + span * uniform01(rng);
      const double y = lo_y + span * uniform01(rng);
      const auto c = classify_point(x, y, geom);
      if (!c || *c != goal) continue;
      out.push_back({x, y, featurize(x, y, task), goal, task});
      break;
    }
  }
  return out;
}

MultiTaskDataset make_multitask_dataset(std::size_t n_train, std::size_t n_test,
                                        std::uint64_t seed,
                                        const YinYangGeometry& geom) {
  if (n_train == 0 || n_test == 0)
    throw InvalidInput("make_multitask_dataset: split sizes must be positive");
  MultiTaskDataset ds;
  ds.seed = seed;
  ds.train_task1 = sample_task(Task::Task1, n_train, derive_seed(seed, 11), geom);
  ds.test_task1 = sample_task(Task::Task1, n_test, derive_seed(seed, 12), geom);
  ds.train_task2 = sample_task(Task::Task2, n_train, derive_seed(seed, 21), geom);
  ds.test_task2 = sample_task(Task::Task2, n_test, derive_seed(seed, 22), geom);
  return ds;
}

std::string label_name(Label l) {
  switch (l) {
    case Label::Yin: return "Yin";
    case Label::Yang: return "Yang";
    case Label::Dot: return "Dot";
  }
  return "?";
}

void write_csv(std::ostream& os, const std::vector<Sample>& samples) {
  os << "task,x,y,f0,f1,f2,f3,label\n";
  os.precision(17);
  for (const auto& s : samples) {
    os << static_cast<int>(s.task) << ',' << s.x << ',' << s.y;
    for (double f : s.features) os << ',' << f;
    os << ',' << static_cast<int>(s.label) << '\n';
  }
}

std::vector<Sample> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "task,x,y,f0,f1,f2,f3,label")
    throw InvalidInput("dataset csv: missing or unexpected header");
  std::vector<Sample> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> cells;
    while (std::getline(ss, field, ',')) cells.push_back(field);
    if (cells.size() != 8)
      throw InvalidInput("dataset csv: line " + std::to_string(lineno) +
                         " has " + std::to_string(cells.size()) + " fields");
    try {
      Sample s;
      const int task = std::stoi(cells[0]);
      const int label = std::stoi(cells[7]);
      if ((task != 1 && task != 2) || label < 0 || label >= kNumClasses)
        throw InvalidInput("bad task or label");
      s.task = static_cast<Task>(task);
      s.x = std::stod(cells[1]);
      s.y = std::stod(cells[2]);
      for (int k = 0; k < kNumFeatures; ++k) s.features[k] = std::stod(cells[3 + k]);
      s.label = static_cast<Label>(label);
      out.push_back(s);
    } catch (const std::exception& e) {
      throw InvalidInput("dataset csv: line " + std::to_string(lineno) + ": " +
                         e.what());
    }
  }
  return out;
}

}  // namespace lea::taskgen
