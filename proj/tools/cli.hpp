#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lstmens/bagging.hpp"
#include "lstmens/data.hpp"
#include "lstmens/training.hpp"

namespace lstmens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (`args[0]` is the subcommand). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, used for the reproducibility header.
std::uint64_t fnv1a(const std::string& text);

/// Canonical `key=value;...` rendering of every training setting.
std::string describe_config(const BaggingConfig& cfg);

/// Small-scale end-to-end experiment on synthetic data.
struct ToyConfig {
  SynthConfig data;
  BaggingConfig bagging;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  std::size_t ensemble_size = 10;

  ToyConfig();
};

struct ToyTrial {
  std::uint64_t seed = 0;
  double single_f1 = 0.0;    // validation-selected single learner (M = 1)
  double ensemble_f1 = 0.0;  // top-M fused ensemble
};

/// Trial `seed` synthesizes data with seed + data.seed, splits it per class,
/// normalizes with training statistics, trains with bagging seed `seed` and
/// scores both models on the test part.
ToyTrial run_toy_trial(const ToyConfig& cfg, std::uint64_t seed);

/// A randomly initialized network plus one frame of random inputs, targets
/// and carried states, for gradient checks.
struct CheckCase {
  LstmNetwork net;
  FrameBatch frame;
};
CheckCase make_check_case(std::uint64_t seed, std::size_t input_dim, std::size_t hidden_dim,
                          std::size_t num_classes, std::size_t num_layers, std::size_t streams,
                          std::size_t frame_length);

}  // namespace lstmens::cli
