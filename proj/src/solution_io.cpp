#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "lea/errors.hpp"
#include "lea/harness.hpp"

namespace lea::harness {

namespace {

using nlohmann::json;
constexpr int kSolutionFormat = 1;

template <class T>
json matrix_json(const BasicMatrix<T>& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<T>(row.begin(), row.end()));
  }
  return rows;
}

template <class T>
BasicMatrix<T> matrix_from(const json& j) {
  auto rows = j.get<std::vector<std::vector<T>>>();
  std::size_t nc = rows.empty() ? 0 : rows.front().size();
  BasicMatrix<T> m(rows.size(), nc);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != nc) throw InvalidInput("solution: ragged matrix");
    for (std::size_t c = 0; c < nc; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

template <class T>
json matrices_json(const std::vector<BasicMatrix<T>>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(matrix_json(m));
  return a;
}

template <class T>
std::vector<BasicMatrix<T>> matrices_from(const json& j) {
  std::vector<BasicMatrix<T>> out;
  for (const auto& m : j) out.push_back(matrix_from<T>(m));
  return out;
}

}  // namespace

void save_solution(std::ostream& os, const SolutionFile& s) {
  json j{{"format", kSolutionFormat},
         {"tool_version", tool_version()},
         {"weights", matrices_json(s.network.weights)},
         {"ternary", matrices_json(s.ternary.ternary)},
         {"scales", s.ternary.scales},
         {"ternary_accuracy", s.ternary.accuracy},
         {"float_accuracy", s.float_accuracy},
         {"ewc",
          {{"lambda", s.ewc.lambda},
           {"anchor", matrices_json(s.ewc.anchor)},
           {"fisher", matrices_json(s.ewc.fisher)}}},
         {"provenance",
          {{"seed", s.seed},
           {"dataset_seed", s.dataset_seed},
           {"linear_baseline", s.linear_baseline},
           {"learning_rate", s.hp.learning_rate},
           {"batch_size", s.hp.batch_size},
           {"epochs_per_task", s.hp.epochs_per_task},
           {"ewc_lambda", s.hp.ewc_lambda}}}};
  os << j.dump(1) << '\n';
}

SolutionFile load_solution(std::istream& is) {
  SolutionFile s;
  try {
    json j = json::parse(is);
    if (j.at("format").get<int>() != kSolutionFormat)
      throw InvalidInput("solution: unsupported format version");
    s.network.weights = matrices_from<double>(j.at("weights"));
    s.network.validate();
    s.ternary.ternary = matrices_from<int>(j.at("ternary"));
    s.ternary.scales = j.at("scales").get<std::vector<double>>();
    s.ternary.accuracy = j.at("ternary_accuracy").get<std::array<double, 2>>();
    s.float_accuracy = j.at("float_accuracy").get<std::array<double, 2>>();
    const auto& e = j.at("ewc");
    s.ewc.lambda = e.at("lambda").get<double>();
    s.ewc.anchor = matrices_from<double>(e.at("anchor"));
    s.ewc.fisher = matrices_from<double>(e.at("fisher"));
    const auto& p = j.at("provenance");
    s.seed = p.at("seed").get<std::uint64_t>();
    s.dataset_seed = p.at("dataset_seed").get<std::uint64_t>();
    s.linear_baseline = p.at("linear_baseline").get<std::array<double, 2>>();
    s.hp.learning_rate = p.at("learning_rate").get<double>();
    s.hp.batch_size = p.at("batch_size").get<std::size_t>();
    s.hp.epochs_per_task = p.at("epochs_per_task").get<std::size_t>();
    s.hp.ewc_lambda = p.at("ewc_lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("solution: ") + e.what());
  }
  const auto& t = s.ternary;
  if (t.ternary.size() != nn::kNumLayers || t.scales.size() != nn::kNumLayers)
    throw InvalidInput("solution: expected one ternary matrix and scale per layer");
  for (std::size_t l = 0; l < nn::kNumLayers; ++l) {
    if (t.ternary[l].rows() != s.network.weights[l].rows() ||
        t.ternary[l].cols() != s.network.weights[l].cols())
      throw InvalidInput("solution: ternary shape differs from float weights");
    if (!(t.scales[l] > 0.0)) throw InvalidInput("solution: scales must be > 0");
    for (int v : t.ternary[l].data())
      if (v < -1 || v > 1) throw InvalidInput("solution: ternary entry outside {-1, 0, +1}");
  }
  return s;
}

void save_solution(const std::filesystem::path& p, const SolutionFile& s) {
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write " + p.string());
  os.precision(17);
  save_solution(os, s);
}

SolutionFile load_solution(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw InvalidInput("cannot open solution " + p.string());
  return load_solution(is);
}

}  // namespace lea::harness
