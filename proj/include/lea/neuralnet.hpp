#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lea/matrix.hpp"
#include "lea/taskgen.hpp"

namespace lea::nn {

/// (in, out) per layer. Outputs of layer l are inputs of layer l + 1.
inline constexpr std::array<std::array<std::size_t, 2>, 3> kLayerDims{
    {{4, 12}, {12, 6}, {6, 3}}};
inline constexpr std::size_t kNumLayers = kLayerDims.size();

/// Bias-free 4-12-6-3 perceptron: tanh, tanh, softmax. weights[l] is
/// in x out, so a row vector x maps to x * W.
struct Network {
  std::vector<Matrix> weights;

  /// Throws InvalidInput unless the shapes match kLayerDims.
  void validate() const;
};

using Gradients = std::vector<Matrix>;

struct EwcState {
  std::vector<Matrix> anchor;  // weights after the first task
  std::vector<Matrix> fisher;  // diagonal Fisher estimate, entries >= 0
  double lambda = 0.0;
};

enum class Method { SGD, EWC };
std::string method_name(Method m);
Method parse_method(const std::string& s);

struct Hyperparameters {
  double learning_rate = 0.02;
  std::size_t batch_size = 16;
  std::size_t epochs_per_task = 100;
  double ewc_lambda = 5.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based over both phases
  double task1_acc = 0.0;
  double task2_acc = 0.0;
  double loss = 0.0;  // mean training loss of the epoch, penalty included
};

struct TrainHistory {
  Method method = Method::SGD;
  std::vector<EpochRecord> epochs;
};

struct ForwardResult {
  Vector probabilities;
  std::vector<Vector> hidden;  // tanh activations of layers 1 and 2
};

Network init_network(std::uint64_t seed);
Network zero_network();

/// Throws InvalidInput on wrong length or non-finite input.
ForwardResult forward(const Network& net, std::span<const double> features);

/// Argmax, lowest index on ties.
int argmax(std::span<const double> values);
int predict(const Network& net, std::span<const double> features);

/// Mean cross-entropy over the batch.
double loss(const Network& net, std::span<const taskgen::Sample> batch);

/// Gradient of mean cross-entropy with respect to each weight matrix.
Gradients backprop(const Network& net, std::span<const taskgen::Sample> batch);

/// Mean squared gradient of log p(argmax class) per weight.
std::vector<Matrix> fisher_diagonal(const Network& net,
                                    std::span<const taskgen::Sample> data);

double ewc_penalty(const Network& net, const EwcState& ewc);

struct TrainResult {
  Network network;
  TrainHistory history;
  EwcState ewc;  // empty fisher for SGD runs
};

/// 100 epochs on Task 1 then 100 on Task 2 (by default). Throws
/// RuntimeFailure if the loss becomes non-finite.
TrainResult train_continual(std::uint64_t seed, const taskgen::MultiTaskDataset& data,
                            Method method, const Hyperparameters& hp = {});

double evaluate(const Network& net, std::span<const taskgen::Sample> split);

/// Bias-free multinomial logistic regression, full-batch gradient descent.
struct LinearModel {
  Matrix weights;  // 4 x 3
  std::size_t iterations = 0;
  double grad_norm = 0.0;
};
LinearModel fit_linear(std::span<const taskgen::Sample> train,
                       double tol = 1e-6, std::size_t max_iters = 10000);
double evaluate_linear(const LinearModel& model,
                       std::span<const taskgen::Sample> split);
double linear_baseline(std::span<const taskgen::Sample> train,
                       std::span<const taskgen::Sample> test);

struct TernarySolution {
  std::vector<IntMatrix> ternary;  // entries in {-1, 0, +1}, in x out
  std::vector<double> scales;      // s_l > 0
  std::array<double, 2> accuracy{0.0, 0.0};  // test accuracy per task

  /// s_l * T_l as a float network.
  Network to_network() const;
  double min_accuracy() const { return std::min(accuracy[0], accuracy[1]); }
  double mean_accuracy() const { return 0.5 * (accuracy[0] + accuracy[1]); }
};

/// Threshold ternarization: delta = 0.7 mean|W|, scale = mean |w| over the
/// surviving entries. Throws RuntimeFailure on a layer that zeroes out.
TernarySolution ternarize(const Network& net);

/// Fills solution.accuracy from the two test splits.
void score_solution(TernarySolution& solution,
                    const taskgen::MultiTaskDataset& data);

/// Index of the candidate maximizing min(task1, task2) accuracy among those
/// beating both baselines. Throws RuntimeFailure if none qualifies.
std::size_t select_solution(std::span<const TernarySolution> candidates,
                            std::array<double, 2> linear_baselines);

/// One table, histories appended in order.
void write_history_csv(std::ostream& os, std::span<const TrainHistory> histories);
std::vector<TrainHistory> read_history_csv(std::istream& is);

}  // namespace lea::nn
