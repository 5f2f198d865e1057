#pragma once

#include <filesystem>

#include "convctc/tensor.hpp"

namespace convctc {

inline constexpr std::size_t kDeltaWindow = 2;
inline constexpr double kVarianceFloor = 1e-8;
inline constexpr std::size_t kFeatureChannels = 3;  // static, delta, delta-delta

/// Regression deltas along time for a [bands x frames] matrix:
///   d_t = sum_{n=1..N} n (c_{t+n} - c_{t-n}) / (2 sum n^2)
/// with the first and last frames replicated past the edges.
template <typename T>
Tensor<T> compute_deltas(const Tensor<T>& static_features,
                         std::size_t window = kDeltaWindow);

/// Stacks static, delta and delta-delta into [3 x bands x frames], without
/// normalization.
template <typename T>
Tensor<T> stack_deltas(const Tensor<T>& static_features,
                       std::size_t window = kDeltaWindow);

/// Per-(channel, band) mean and standard deviation, each [3 x bands].
template <typename T>
struct NormalizationStats {
  Tensor<T> mean;
  Tensor<T> stddev;

  std::size_t bands() const { return mean.extent(1); }

  /// Standalone stats file: two tensor records (means, stds).
  void save(const std::filesystem::path& path) const;
  static NormalizationStats load(const std::filesystem::path& path);

  template <typename U>
  NormalizationStats<U> cast() const {
    return {mean.template cast<U>(), stddev.template cast<U>()};
  }
};

/// Streaming (Welford) accumulation over every frame of every utterance, in
/// the order utterances are added. Population variance, floored at 1e-8.
template <typename T>
class NormalizationAccumulator {
 public:
  explicit NormalizationAccumulator(std::size_t bands);

  /// Adds a stacked [3 x bands x frames] utterance.
  void add(const Tensor<T>& stacked);
  std::size_t frames() const { return count_; }
  NormalizationStats<T> finish() const;

 private:
  std::size_t bands_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Normalizes a stacked [3 x bands x frames] tensor in place.
template <typename T>
void apply_normalization(Tensor<T>& stacked, const NormalizationStats<T>& stats);

template <typename T>
void invert_normalization(Tensor<T>& stacked,
                          const NormalizationStats<T>& stats);

/// Static [bands x frames] -> normalized network input [3 x bands x frames].
template <typename T>
Tensor<T> assemble_input(const Tensor<T>& static_features,
                         const NormalizationStats<T>& stats);

}  // namespace convctc
