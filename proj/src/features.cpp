#include "convctc/features.hpp"

#include <cmath>

#include "convctc/tensor_io.hpp"

namespace convctc {

template <typename T>
Tensor<T> compute_deltas(const Tensor<T>& c, std::size_t window) {
  if (window < 1) throw std::invalid_argument("delta window must be >= 1");
  if (c.rank() != 2) {
    throw ShapeError("deltas expect [bands x frames], got " +
                     shape_string(c.shape()));
  }
  const std::size_t bands = c.extent(0);
  const std::size_t frames = c.extent(1);
  T denom = 0;
  for (std::size_t n = 1; n <= window; ++n) denom += static_cast<T>(n * n);
  denom *= T(2);
  Tensor<T> d(c.shape());
  const auto last = static_cast<std::ptrdiff_t>(frames) - 1;
  for (std::size_t b = 0; b < bands; ++b) {
    const T* row = c.raw() + b * frames;
    T* out = d.raw() + b * frames;
    for (std::size_t t = 0; t < frames; ++t) {
      T acc = 0;
      for (std::size_t n = 1; n <= window; ++n) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        const auto np = static_cast<std::ptrdiff_t>(n);
        const T ahead = row[std::min(ti + np, last)];
        const T behind = row[std::max<std::ptrdiff_t>(ti - np, 0)];
        acc += static_cast<T>(n) * (ahead - behind);
      }
      out[t] = acc / denom;
    }
  }
  return d;
}

template <typename T>
Tensor<T> stack_deltas(const Tensor<T>& c, std::size_t window) {
  const Tensor<T> d1 = compute_deltas(c, window);
  const Tensor<T> d2 = compute_deltas(d1, window);
  const std::size_t n = c.size();
  Tensor<T> out({kFeatureChannels, c.extent(0), c.extent(1)});
  std::copy_n(c.raw(), n, out.raw());
  std::copy_n(d1.raw(), n, out.raw() + n);
  std::copy_n(d2.raw(), n, out.raw() + 2 * n);
  return out;
}

template <typename T>
void NormalizationStats<T>::save(const std::filesystem::path& path) const {
  save_tensor_list<T>(path, {mean, stddev});
}

template <typename T>
NormalizationStats<T> NormalizationStats<T>::load(
    const std::filesystem::path& path) {
  auto list = load_tensor_list<T>(path);
  if (list.size() != 2 || list[0].rank() != 2 ||
      list[0].shape() != list[1].shape() ||
      list[0].extent(0) != kFeatureChannels) {
    throw FormatError(path.string() +
                      ": expected two [3 x bands] tensors (means, stds)");
  }
  return {std::move(list[0]), std::move(list[1])};
}

template <typename T>
NormalizationAccumulator<T>::NormalizationAccumulator(std::size_t bands)
    : bands_(bands),
      mean_(kFeatureChannels * bands, 0.0),
      m2_(kFeatureChannels * bands, 0.0) {}

template <typename T>
void NormalizationAccumulator<T>::add(const Tensor<T>& stacked) {
  if (stacked.rank() != 3 || stacked.extent(0) != kFeatureChannels ||
      stacked.extent(1) != bands_) {
    throw ShapeError("normalization expects [3 x " + std::to_string(bands_) +
                     " x frames], got " + shape_string(stacked.shape()));
  }
  const std::size_t frames = stacked.extent(2);
  const std::size_t dims = kFeatureChannels * bands_;
  for (std::size_t t = 0; t < frames; ++t) {
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t d = 0; d < dims; ++d) {
      const double x = stacked[d * frames + t];
      const double delta = x - mean_[d];
      mean_[d] += delta / n;
      m2_[d] += delta * (x - mean_[d]);
    }
  }
}

template <typename T>
NormalizationStats<T> NormalizationAccumulator<T>::finish() const {
  if (count_ < 2) {
    throw std::invalid_argument(
        "normalization needs at least two training frames, got " +
        std::to_string(count_));
  }
  NormalizationStats<T> s{Tensor<T>({kFeatureChannels, bands_}),
                          Tensor<T>({kFeatureChannels, bands_})};
  for (std::size_t d = 0; d < mean_.size(); ++d) {
    const double var = std::max(m2_[d] / static_cast<double>(count_),
                                kVarianceFloor);
    s.mean[d] = static_cast<T>(mean_[d]);
    s.stddev[d] = static_cast<T>(std::sqrt(var));
  }
  return s;
}

namespace {

template <typename T>
void check_stats(const Tensor<T>& stacked, const NormalizationStats<T>& stats) {
  if (stacked.rank() != 3 || stacked.extent(0) != kFeatureChannels) {
    throw ShapeError("expected [3 x bands x frames], got " +
                     shape_string(stacked.shape()));
  }
  if (stats.mean.shape() != Shape{kFeatureChannels, stacked.extent(1)}) {
    throw ShapeError("normalization stats cover " +
                     shape_string(stats.mean.shape()) + " but features have " +
                     std::to_string(stacked.extent(1)) + " bands");
  }
}

}  // namespace

template <typename T>
void apply_normalization(Tensor<T>& stacked,
                         const NormalizationStats<T>& stats) {
  check_stats(stacked, stats);
  const std::size_t frames = stacked.extent(2);
  for (std::size_t d = 0; d < stats.mean.size(); ++d) {
    T* row = stacked.raw() + d * frames;
    const T mu = stats.mean[d];
    const T sd = stats.stddev[d];
    for (std::size_t t = 0; t < frames; ++t) row[t] = (row[t] - mu) / sd;
  }
}

template <typename T>
void invert_normalization(Tensor<T>& stacked,
                          const NormalizationStats<T>& stats) {
  check_stats(stacked, stats);
  const std::size_t frames = stacked.extent(2);
  for (std::size_t d = 0; d < stats.mean.size(); ++d) {
    T* row = stacked.raw() + d * frames;
    for (std::size_t t = 0; t < frames; ++t) {
      row[t] = row[t] * stats.stddev[d] + stats.mean[d];
    }
  }
}

template <typename T>
Tensor<T> assemble_input(const Tensor<T>& static_features,
                         const NormalizationStats<T>& stats) {
  if (static_features.rank() != 2) {
    throw ShapeError("static features must be [bands x frames], got " +
                     shape_string(static_features.shape()));
  }
  if (static_features.extent(0) != stats.bands()) {
    throw ShapeError("features have " +
                     std::to_string(static_features.extent(0)) +
                     " bands, normalization stats expect " +
                     std::to_string(stats.bands()));
  }
  Tensor<T> x = stack_deltas(static_features);
  apply_normalization(x, stats);
  return x;
}

#define CONVCTC_INSTANTIATE(T)                                              \
  template Tensor<T> compute_deltas<T>(const Tensor<T>&, std::size_t);      \
  template Tensor<T> stack_deltas<T>(const Tensor<T>&, std::size_t);        \
  template struct NormalizationStats<T>;                                    \
  template class NormalizationAccumulator<T>;                               \
  template void apply_normalization<T>(Tensor<T>&,                          \
                                       const NormalizationStats<T>&);       \
  template void invert_normalization<T>(Tensor<T>&,                         \
                                        const NormalizationStats<T>&);      \
  template Tensor<T> assemble_input<T>(const Tensor<T>&,                    \
                                       const NormalizationStats<T>&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
