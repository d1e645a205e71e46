#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lea::taskgen {

enum class Label : int { Yin = 0, Yang = 1, Dot = 2 };
enum class Task : int { Task1 = 1, Task2 = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr int kNumFeatures = 4;

using Features = std::array<double, kNumFeatures>;

/// Yin-Yang symbol in the unit square. Defaults follow the public reference
/// construction of the dataset.
struct YinYangGeometry {
  double r_big = 0.5;
  double r_small = 0.1;
  std::array<double, 2> center{0.5, 0.5};
  std::array<double, 2> left_dot{0.25, 0.5};
  std::array<double, 2> right_dot{0.75, 0.5};

  /// Throws InvalidInput if the dot radius or dot positions are inconsistent.
  void validate() const;
};

struct Sample {
  double x = 0.0;  // pre-offset coordinates in the unit square
  double y = 0.0;
  Features features{};
  Label label = Label::Yin;
  Task task = Task::Task1;
};

/// Class of an in-circle point; nullopt when (x, y) lies outside the big
/// circle, in which case the caller resamples.
std::optional<Label> classify_point(double x, double y,
                                    const YinYangGeometry& geom = {});

/// (x, y, 1-x, 1-y) for Task 1; the same vector shifted by +1 for Task 2.
Features featurize(double x, double y, Task task);

/// n balanced samples by rejection sampling, goal classes cycling
/// Yin -> Yang -> Dot.
std::vector<Sample> sample_task(Task task, std::size_t n, std::uint64_t seed,
                                const YinYangGeometry& geom = {});

struct MultiTaskDataset {
  std::vector<Sample> train_task1;
  std::vector<Sample> test_task1;
  std::vector<Sample> train_task2;
  std::vector<Sample> test_task2;
  std::uint64_t seed = 0;

  const std::vector<Sample>& train(Task t) const {
    return t == Task::Task1 ? train_task1 : train_task2;
  }
  const std::vector<Sample>& test(Task t) const {
    return t == Task::Task1 ? test_task1 : test_task2;
  }
};

MultiTaskDataset make_multitask_dataset(std::size_t n_train, std::size_t n_test,
                                        std::uint64_t seed,
                                        const YinYangGeometry& geom = {});

std::string label_name(Label l);

// CSV with header `task,x,y,f0,f1,f2,f3,label`. The split column is not part
// of the format, so a dataset is written as four files (see harness).
void write_csv(std::ostream& os, const std::vector<Sample>& samples);
std::vector<Sample> read_csv(std::istream& is);

}  // namespace lea::taskgen
