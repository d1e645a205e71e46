#include "lea/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "lea/errors.hpp"
#include "lea/rng.hpp"

namespace lea::nn {

namespace {

using taskgen::Sample;

void softmax_inplace(Vector& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

// Row vector times matrix.
Vector vecmat(std::span<const double> a, const Matrix& w) {
  Vector out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double ai = a[i];
    const auto row = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += ai * row[j];
  }
  return out;
}

std::vector<Matrix> zeros_like(const std::vector<Matrix>& ref) {
  std::vector<Matrix> out;
  out.reserve(ref.size());
  for (const auto& m : ref) out.emplace_back(m.rows(), m.cols(), 0.0);
  return out;
}

// Adds scale * d(-log p[target]) / dW into grads; returns -log p[target].
double accumulate_sample_gradient(const Network& net, const taskgen::Features& x,
                                  int target, double scale, Gradients& grads) {
  std::vector<Vector> acts;  // acts[l] is the input to layer l
  acts.reserve(kNumLayers + 1);
  acts.emplace_back(x.begin(), x.end());
  Vector z;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    z = vecmat(acts.back(), net.weights[l]);
    if (l + 1 < kNumLayers) {
      for (double& v : z) v = std::tanh(v);
      acts.push_back(z);
    }
  }
  softmax_inplace(z);
  const double sample_loss = -std::log(std::max(z[target], 1e-300));

  Vector delta = z;  // dL/dlogits
  delta[target] -= 1.0;
  for (std::size_t l = kNumLayers; l-- > 0;) {
    const auto& a = acts[l];
    const auto& w = net.weights[l];
    auto& g = grads[l];
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) g(i, j) += scale * a[i] * delta[j];
    if (l == 0) break;
    Vector prev(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * delta[j];
      prev[i] = s * (1.0 - a[i] * a[i]);
    }
    delta = std::move(prev);
  }
  return sample_loss;
}

}  // namespace

void Network::validate() const {
  if (weights.size() != kNumLayers)
    throw InvalidInput("network: expected 3 weight matrices");
  for (std::size_t l = 0; l < kNumLayers; ++l)
    if (weights[l].rows() != kLayerDims[l][0] || weights[l].cols() != kLayerDims[l][1])
      throw InvalidInput("network: layer " + std::to_string(l + 1) +
                         " has the wrong shape");
}

std::string method_name(Method m) { return m == Method::SGD ? "SGD" : "EWC"; }

Method parse_method(const std::string& s) {
  if (s == "SGD" || s == "sgd") return Method::SGD;
  if (s == "EWC" || s == "ewc") return Method::EWC;
  throw InvalidInput("unknown training method: " + s);
}

Network zero_network() {
  Network net;
  for (const auto& d : kLayerDims) net.weights.emplace_back(d[0], d[1], 0.0);
  return net;
}

Network init_network(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  Network net = zero_network();
  for (auto& w : net.weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (double& v : w.data()) v = uniform(rng, -bound, bound);
  }
  return net;
}

ForwardResult forward(const Network& net, std::span<const double> features) {
  if (features.size() != kLayerDims[0][0])
    throw InvalidInput("forward: expected 4 features");
  for (double f : features)
    if (!std::isfinite(f)) throw InvalidInput("forward: non-finite feature");
  ForwardResult out;
  Vector a(features.begin(), features.end());
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    a = vecmat(a, net.weights[l]);
    if (l + 1 < kNumLayers) {
      for (double& v : a) v = std::tanh(v);
      out.hidden.push_back(a);
    }
  }
  softmax_inplace(a);
  out.probabilities = std::move(a);
  return out;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

int predict(const Network& net, std::span<const double> features) {
  return argmax(forward(net, features).probabilities);
}

double loss(const Network& net, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidInput("loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const auto p = forward(net, s.features).probabilities;
    total -= std::log(std::max(p[static_cast<int>(s.label)], 1e-300));
  }
  return total / static_cast<double>(batch.size());
}

Gradients backprop(const Network& net, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidInput("backprop: empty batch");
  Gradients g = zeros_like(net.weights);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch)
    accumulate_sample_gradient(net, s.features, static_cast<int>(s.label), scale, g);
  return g;
}

std::vector<Matrix> fisher_diagonal(const Network& net, std::span<const Sample> data) {
  if (data.empty()) throw InvalidInput("fisher_diagonal: empty data");
  std::vector<Matrix> fisher = zeros_like(net.weights);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (const auto& s : data) {
    Gradients g = zeros_like(net.weights);
    const int yhat = predict(net, s.features);
    accumulate_sample_gradient(net, s.features, yhat, 1.0, g);
    for (std::size_t l = 0; l < g.size(); ++l)
      for (std::size_t k = 0; k < g[l].size(); ++k)
        fisher[l].data()[k] += scale * g[l].data()[k] * g[l].data()[k];
  }
  return fisher;
}

double ewc_penalty(const Network& net, const EwcState& ewc) {
  if (ewc.anchor.size() != net.weights.size() || ewc.fisher.size() != net.weights.size())
    throw InvalidInput("ewc_penalty: state does not match network");
  double total = 0.0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l].data();
    const auto& a = ewc.anchor[l].data();
    const auto& f = ewc.fisher[l].data();
    if (a.size() != w.size() || f.size() != w.size())
      throw InvalidInput("ewc_penalty: layer shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = w[k] - a[k];
      total += f[k] * d * d;
    }
  }
  return 0.5 * ewc.lambda * total;
}

double evaluate(const Network& net, std::span<const Sample> split) {
  if (split.empty()) throw InvalidInput("evaluate: empty split");
  std::size_t correct = 0;
  for (const auto& s : split)
    if (predict(net, s.features) == static_cast<int>(s.label)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

TrainResult train_continual(std::uint64_t seed, const taskgen::MultiTaskDataset& data,
                            Method method, const Hyperparameters& hp) {
  if (data.train_task1.empty() || data.train_task2.empty() ||
      data.test_task1.empty() || data.test_task2.empty())
    throw InvalidInput("train_continual: dataset has an empty split");
  if (hp.batch_size == 0 || !(hp.learning_rate > 0.0) || hp.ewc_lambda < 0.0)
    throw InvalidInput("train_continual: invalid hyperparameters");

  TrainResult result;
  result.network = init_network(seed);
  result.history.method = method;
  Network& net = result.network;
  Rng rng(derive_seed(seed, 2));

  bool penalty_active = false;
  std::size_t epoch = 0;
  for (const auto task : {taskgen::Task::Task1, taskgen::Task::Task2}) {
    const auto& train = data.train(task);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;
    batch.reserve(hp.batch_size);

    for (std::size_t e = 0; e < hp.epochs_per_task; ++e) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[uniform_index(rng, i)]);

      double epoch_loss = 0.0;
      std::size_t n_batches = 0;
      for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
        const std::size_t stop = std::min(order.size(), start + hp.batch_size);
        Gradients g = zeros_like(net.weights);
        const double scale = 1.0 / static_cast<double>(stop - start);
        double batch_loss = 0.0;
        for (std::size_t k = start; k < stop; ++k) {
          const auto& s = train[order[k]];
          batch_loss += scale * accumulate_sample_gradient(
                                    net, s.features, static_cast<int>(s.label), scale, g);
        }
        if (penalty_active) batch_loss += ewc_penalty(net, result.ewc);
        if (!std::isfinite(batch_loss))
          throw RuntimeFailure("train_continual: non-finite loss at epoch " +
                               std::to_string(epoch + 1) + " (seed " +
                               std::to_string(seed) + ", method " +
                               method_name(method) + ")");
        if (penalty_active) {
          // Implicit step on the quadratic penalty: minimizes
          // |w - (w - lr g)|^2 / (2 lr) + (lambda/2) F (w - anchor)^2 exactly,
          // which stays stable for any lambda * F.
          for (std::size_t l = 0; l < g.size(); ++l)
            for (std::size_t k = 0; k < g[l].size(); ++k) {
              const double rho = hp.learning_rate * result.ewc.lambda *
                                 result.ewc.fisher[l].data()[k];
              double& w = net.weights[l].data()[k];
              w = (w - hp.learning_rate * g[l].data()[k] +
                   rho * result.ewc.anchor[l].data()[k]) /
                  (1.0 + rho);
            }
        } else {
          for (std::size_t l = 0; l < g.size(); ++l)
            for (std::size_t k = 0; k < g[l].size(); ++k)
              net.weights[l].data()[k] -= hp.learning_rate * g[l].data()[k];
        }
        epoch_loss += batch_loss;
        ++n_batches;
      }

      ++epoch;
      result.history.epochs.push_back({epoch, evaluate(net, data.test_task1),
                                       evaluate(net, data.test_task2),
                                       epoch_loss / static_cast<double>(n_batches)});
    }

    if (task == taskgen::Task::Task1 && method == Method::EWC) {
      result.ewc.anchor = net.weights;
      result.ewc.fisher = fisher_diagonal(net, data.train_task1);
      result.ewc.lambda = hp.ewc_lambda;
      penalty_active = true;
    }
  }
  return result;
}

LinearModel fit_linear(std::span<const Sample> train, double tol, std::size_t max_iters) {
  if (train.empty()) throw InvalidInput("fit_linear: empty training set");
  constexpr std::size_t kIn = taskgen::kNumFeatures;
  constexpr std::size_t kOut = taskgen::kNumClasses;
  const double inv_n = 1.0 / static_cast<double>(train.size());

  // Step size 1/L with L = lambda_max(X^T X / n) / 2 bounding the Hessian.
  Matrix gram(kIn, kIn, 0.0);
  for (const auto& s : train)
    for (std::size_t i = 0; i < kIn; ++i)
      for (std::size_t j = 0; j < kIn; ++j)
        gram(i, j) += inv_n * s.features[i] * s.features[j];
  Vector v(kIn, 1.0);
  double lambda_max = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector next(kIn, 0.0);
    for (std::size_t i = 0; i < kIn; ++i)
      for (std::size_t j = 0; j < kIn; ++j) next[i] += gram(i, j) * v[j];
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    for (std::size_t i = 0; i < kIn; ++i) v[i] = next[i] / norm;
    lambda_max = norm;
  }
  const double step = lambda_max > 0.0 ? 2.0 / lambda_max : 1.0;

  LinearModel model;
  model.weights = Matrix(kIn, kOut, 0.0);
  Matrix grad(kIn, kOut);
  for (model.iterations = 0; model.iterations < max_iters; ++model.iterations) {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
    for (const auto& s : train) {
      Vector z = vecmat(s.features, model.weights);
      softmax_inplace(z);
      z[static_cast<int>(s.label)] -= 1.0;
      for (std::size_t i = 0; i < kIn; ++i)
        for (std::size_t j = 0; j < kOut; ++j) grad(i, j) += inv_n * s.features[i] * z[j];
    }
    double norm = 0.0;
    for (double g : grad.data()) norm += g * g;
    model.grad_norm = std::sqrt(norm);
    if (model.grad_norm < tol) break;
    for (std::size_t k = 0; k < grad.size(); ++k)
      model.weights.data()[k] -= step * grad.data()[k];
  }
  return model;
}

double evaluate_linear(const LinearModel& model, std::span<const Sample> split) {
  if (split.empty()) throw InvalidInput("evaluate_linear: empty split");
  std::size_t correct = 0;
  for (const auto& s : split)
    if (argmax(vecmat(s.features, model.weights)) == static_cast<int>(s.label)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

double linear_baseline(std::span<const Sample> train, std::span<const Sample> test) {
  return evaluate_linear(fit_linear(train), test);
}

Network TernarySolution::to_network() const {
  Network net;
  for (std::size_t l = 0; l < ternary.size(); ++l) {
    const auto& t = ternary[l];
    Matrix w(t.rows(), t.cols());
    for (std::size_t k = 0; k < t.size(); ++k)
      w.data()[k] = scales[l] * static_cast<double>(t.data()[k]);
    net.weights.push_back(std::move(w));
  }
  return net;
}

TernarySolution ternarize(const Network& net) {
  TernarySolution sol;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l];
    double mean_abs = 0.0;
    for (double v : w.data()) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(w.size());
    const double delta = 0.7 * mean_abs;

    IntMatrix t(w.rows(), w.cols(), 0);
    double kept = 0.0;
    std::size_t n_kept = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double v = w.data()[k];
      if (std::abs(v) > delta) {
        t.data()[k] = v > 0.0 ? 1 : -1;
        kept += std::abs(v);
        ++n_kept;
      }
    }
    if (n_kept == 0)
      throw RuntimeFailure("ternarize: layer " + std::to_string(l + 1) +
                           " quantizes to all zeros");
    sol.ternary.push_back(std::move(t));
    sol.scales.push_back(kept / static_cast<double>(n_kept));
  }
  return sol;
}

void score_solution(TernarySolution& solution, const taskgen::MultiTaskDataset& data) {
  const Network net = solution.to_network();
  solution.accuracy = {evaluate(net, data.test_task1), evaluate(net, data.test_task2)};
}

std::size_t select_solution(std::span<const TernarySolution> candidates,
                            std::array<double, 2> linear_baselines) {
  if (candidates.empty()) throw InvalidInput("select_solution: no candidates");
  std::size_t best = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.accuracy[0] <= linear_baselines[0] || c.accuracy[1] <= linear_baselines[1])
      continue;
    if (best == candidates.size() || c.min_accuracy() > candidates[best].min_accuracy())
      best = i;
  }
  if (best == candidates.size())
    throw RuntimeFailure(
        "select_solution: no quantized candidate beats the linear baseline on both "
        "tasks; train more seeds");
  return best;
}

void write_history_csv(std::ostream& os, std::span<const TrainHistory> histories) {
  os << "epoch,method,task1_acc,task2_acc,loss\n";
  os.precision(10);
  for (const auto& history : histories)
    for (const auto& e : history.epochs)
      os << e.epoch << ',' << method_name(history.method) << ',' << e.task1_acc << ','
         << e.task2_acc << ',' << e.loss << '\n';
}

std::vector<TrainHistory> read_history_csv(std::istream& is) {
  std::vector<TrainHistory> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("epoch,method", 0) != 0)
    throw InvalidInput("history csv: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw InvalidInput("history csv: short row: " + line);
    Method m = parse_method(f[1]);
    if (out.empty() || out.back().method != m) out.push_back(TrainHistory{m, {}});
    try {
      out.back().epochs.push_back(
          {std::stoul(f[0]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw InvalidInput("history csv: bad number in row: " + line);
    }
  }
  return out;
}

}  // namespace lea::nn
