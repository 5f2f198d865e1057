#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "convctc/network.hpp"

namespace convctc {

enum class Stage { adam, sgd };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

inline constexpr double kAdamLearningRate = 1e-4;
inline constexpr double kSgdLearningRate = 1e-5;
inline constexpr double kFineTuneL2 = 1e-5;
inline constexpr double kInitBound = 0.05;
inline constexpr double kPreluInitSlope = 0.1;

struct OptimizerConfig {
  Stage stage = Stage::adam;
  double lr = kAdamLearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;         // coupled penalty, weights only
  double clip_norm = 0.0;  // global-norm clip; 0 disables
};

/// Recipe defaults for a stage: Adam lr 1e-4 without L2, SGD lr 1e-5 with
/// L2 1e-5.
OptimizerConfig stage_defaults(Stage stage);

template <typename T>
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  /// Zeroed moments shaped like `params`.
  static OptimizerState fresh(const OptimizerConfig& config,
                              const ParameterSet<T>& params);
};

/// Weights i.i.d. uniform in [lo, hi] drawn in parameter order; biases 0;
/// PReLU slopes 0.1.
template <typename T>
ParameterSet<T> init_uniform(const std::vector<ParamShape>& shapes,
                             std::mt19937_64& rng, double lo = -kInitBound,
                             double hi = kInitBound);

/// Bias-corrected Adam; `step` is incremented before the correction.
template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads,
               OptimizerState<T>& state);

/// p <- p - lr * (g + l2 * p), the penalty applied to weights only.
template <typename T>
void sgd_step(ParameterSet<T>& params, const ParameterSet<T>& grads,
              OptimizerState<T>& state);

/// Dispatches on state.config.stage after optional global-norm clipping.
template <typename T>
void optimizer_step(ParameterSet<T>& params, ParameterSet<T>& grads,
                    OptimizerState<T>& state);

/// Rescales grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <typename T>
double clip_global_norm(ParameterSet<T>& grads, double max_norm);

}  // namespace convctc
