#include "convctc/layers.hpp"

#include <cstring>

namespace convctc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t filter,
                               Padding padding) {
  if (padding == Padding::same) return in;
  require(filter <= in, "filter extent " + std::to_string(filter) +
                            " exceeds unpadded input extent " +
                            std::to_string(in));
  return in - filter + 1;
}

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
std::pair<Tensor<T>, ConvTape<T>> conv2d_forward(const Tensor<T>& x,
                                                 const ConvSpec& spec,
                                                 const Tensor<T>& weights,
                                                 const Tensor<T>& biases) {
  require(spec.out_maps >= 1 && spec.filter_freq >= 1 && spec.filter_time >= 1,
          "conv spec extents must be positive");
  require(x.rank() == 3, "conv input must be [channels x bands x frames], got " +
                             shape_string(x.shape()));
  require(x.extent(0) == spec.in_channels,
          "conv expects " + std::to_string(spec.in_channels) +
              " input channels, got " + std::to_string(x.extent(0)));
  const Shape wshape{spec.out_maps, spec.in_channels, spec.filter_freq,
                     spec.filter_time};
  require(weights.shape() == wshape, "conv weights must be " +
                                         shape_string(wshape) + ", got " +
                                         shape_string(weights.shape()));
  require(biases.shape() == Shape{spec.out_maps},
          "conv biases must be [" + std::to_string(spec.out_maps) + "], got " +
              shape_string(biases.shape()));

  const std::size_t c = spec.in_channels;
  const std::size_t b = x.extent(1);
  const std::size_t f = x.extent(2);
  const std::size_t m = spec.filter_freq;
  const std::size_t n = spec.filter_time;

  ConvTape<T> tape;
  tape.spec = spec;
  tape.input_shape = x.shape();
  tape.out_bands = conv_output_extent(b, m, spec.freq_padding);
  tape.out_frames = conv_output_extent(f, n, spec.time_padding);
  tape.pad_freq = spec.freq_padding == Padding::same ? (m - 1) / 2 : 0;
  tape.pad_time = spec.time_padding == Padding::same ? (n - 1) / 2 : 0;

  const std::size_t ob = tape.out_bands;
  const std::size_t of = tape.out_frames;
  const std::size_t positions = ob * of;
  tape.cols = Tensor<T>({c * m * n, positions});

  // Row (ch, i, j) of cols holds x[ch][ob + i - pad_f][ot + j - pad_t].
  T* cols = tape.cols.raw();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T* row = cols + ((ch * m + i) * n + j) * positions;
        // Valid output frames: 0 <= ot + j - pad_t < f.
        const std::ptrdiff_t shift =
            static_cast<std::ptrdiff_t>(j) -
            static_cast<std::ptrdiff_t>(tape.pad_time);
        const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(of),
            static_cast<std::ptrdiff_t>(f) - shift);
        for (std::size_t obi = 0; obi < ob; ++obi) {
          const std::ptrdiff_t sb = static_cast<std::ptrdiff_t>(obi + i) -
                                    static_cast<std::ptrdiff_t>(tape.pad_freq);
          T* dst = row + obi * of;
          if (sb < 0 || sb >= static_cast<std::ptrdiff_t>(b) || t_lo >= t_hi) {
            continue;  // cols is zero-initialised
          }
          const T* src = x.raw() + (ch * b + static_cast<std::size_t>(sb)) * f;
          std::memcpy(dst + t_lo, src + (t_lo + shift),
                      static_cast<std::size_t>(t_hi - t_lo) * sizeof(T));
        }
      }
    }
  }

  Tensor<T> out({spec.out_maps, ob, of});
  T* o = out.raw();
  for (std::size_t k = 0; k < spec.out_maps; ++k) {
    std::fill(o + k * positions, o + (k + 1) * positions, biases[k]);
  }
  gemm_accumulate(spec.out_maps, positions, c * m * n, weights.raw(), cols, o);
  return {std::move(out), std::move(tape)};
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& weights) {
  const ConvSpec& spec = tape.spec;
  const Shape oshape{spec.out_maps, tape.out_bands, tape.out_frames};
  require(grad_out.shape() == oshape,
          "conv backward expects gradient " + shape_string(oshape) + ", got " +
              shape_string(grad_out.shape()));
  require(weights.shape() == Shape{spec.out_maps, spec.in_channels,
                                   spec.filter_freq, spec.filter_time},
          "conv backward weights do not match the tape");

  const std::size_t k = spec.out_maps;
  const std::size_t rows = spec.in_channels * spec.filter_freq * spec.filter_time;
  const std::size_t positions = tape.out_bands * tape.out_frames;

  ConvGrads<T> g;
  g.grad_biases = Tensor<T>({k});
  for (std::size_t i = 0; i < k; ++i) {
    T acc = 0;
    const T* go = grad_out.raw() + i * positions;
    for (std::size_t p = 0; p < positions; ++p) acc += go[p];
    g.grad_biases[i] = acc;
  }

  // dW = dY * cols^T
  std::vector<T> cols_t(rows * positions);
  transpose_into(rows, positions, tape.cols.raw(), cols_t.data());
  g.grad_weights = Tensor<T>(weights.shape());
  gemm_accumulate(k, rows, positions, grad_out.raw(), cols_t.data(),
                  g.grad_weights.raw());

  // dcols = W^T * dY, then scatter back onto the input grid.
  std::vector<T> w_t(rows * k);
  transpose_into(k, rows, weights.raw(), w_t.data());
  std::vector<T> dcols(rows * positions, T(0));
  gemm_accumulate(rows, positions, k, w_t.data(), grad_out.raw(), dcols.data());

  const std::size_t b = tape.input_shape[1];
  const std::size_t f = tape.input_shape[2];
  const std::size_t m = spec.filter_freq;
  const std::size_t n = spec.filter_time;
  const std::size_t of = tape.out_frames;
  g.grad_x = Tensor<T>(tape.input_shape);
  for (std::size_t ch = 0; ch < spec.in_channels; ++ch) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T* row = dcols.data() + ((ch * m + i) * n + j) * positions;
        const std::ptrdiff_t shift =
            static_cast<std::ptrdiff_t>(j) -
            static_cast<std::ptrdiff_t>(tape.pad_time);
        const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(of),
            static_cast<std::ptrdiff_t>(f) - shift);
        for (std::size_t obi = 0; obi < tape.out_bands; ++obi) {
          const std::ptrdiff_t sb = static_cast<std::ptrdiff_t>(obi + i) -
                                    static_cast<std::ptrdiff_t>(tape.pad_freq);
          if (sb < 0 || sb >= static_cast<std::ptrdiff_t>(b)) continue;
          const T* src = row + obi * of;
          T* dst = g.grad_x.raw() + (ch * b + static_cast<std::size_t>(sb)) * f;
          for (std::ptrdiff_t t = t_lo; t < t_hi; ++t) dst[t + shift] += src[t];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
std::pair<Tensor<T>, ReluTape> relu(const Tensor<T>& h) {
  ReluTape tape{h.shape(), std::vector<std::uint8_t>(h.size())};
  Tensor<T> out(h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    tape.positive[i] = out[i] > T(0);
    if (!tape.positive[i]) out[i] = T(0);
  }
  return {std::move(out), std::move(tape)};
}

template <typename T>
Tensor<T> relu_backward(const ReluTape& tape, const Tensor<T>& grad_out) {
  require(grad_out.shape() == tape.shape, "relu backward shape mismatch");
  Tensor<T> g(grad_out);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!tape.positive[i]) g[i] = T(0);
  }
  return g;
}

template <typename T>
std::pair<Tensor<T>, PreluTape<T>> prelu(const Tensor<T>& h,
                                         const Tensor<T>& alpha) {
  require(h.rank() >= 1 && alpha.shape() == Shape{h.extent(0)},
          "prelu needs one slope per map: input " + shape_string(h.shape()) +
              ", alpha " + shape_string(alpha.shape()));
  const std::size_t per_map = h.size() / h.extent(0);
  Tensor<T> out(h);
  for (std::size_t k = 0; k < h.extent(0); ++k) {
    T* o = out.raw() + k * per_map;
    for (std::size_t i = 0; i < per_map; ++i) {
      if (!(o[i] > T(0))) o[i] = alpha[k] * o[i];
    }
  }
  return {std::move(out), PreluTape<T>{h}};
}

template <typename T>
PreluGrads<T> prelu_backward(const PreluTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& alpha) {
  const auto& h = tape.input;
  require(grad_out.shape() == h.shape(), "prelu backward shape mismatch");
  require(alpha.shape() == Shape{h.extent(0)}, "prelu alpha shape mismatch");
  const std::size_t per_map = h.size() / h.extent(0);
  PreluGrads<T> g{Tensor<T>(h.shape()), Tensor<T>({h.extent(0)})};
  for (std::size_t k = 0; k < h.extent(0); ++k) {
    const T* hv = h.raw() + k * per_map;
    const T* go = grad_out.raw() + k * per_map;
    T* gh = g.grad_h.raw() + k * per_map;
    T acc = 0;
    for (std::size_t i = 0; i < per_map; ++i) {
      if (hv[i] > T(0)) {
        gh[i] = go[i];
      } else {
        gh[i] = alpha[k] * go[i];
        acc += hv[i] * go[i];
      }
    }
    g.grad_alpha[k] = acc;
  }
  return g;
}

template <typename T>
std::pair<Tensor<T>, MaxoutTape> maxout(const Tensor<T>& h,
                                        std::size_t pieces) {
  require(pieces >= 1 && pieces <= 255, "maxout piece count out of range");
  require(h.rank() >= 1 && h.extent(0) % pieces == 0,
          "maxout input " + shape_string(h.shape()) +
              " is not divisible into " + std::to_string(pieces) + " pieces");
  Shape oshape = h.shape();
  oshape[0] /= pieces;
  Tensor<T> out(oshape);
  MaxoutTape tape{h.shape(), pieces, std::vector<std::uint8_t>(out.size(), 0)};
  const std::size_t block = out.size();
  std::copy_n(h.raw(), block, out.raw());
  for (std::size_t p = 1; p < pieces; ++p) {
    const T* src = h.raw() + p * block;
    for (std::size_t i = 0; i < block; ++i) {
      if (src[i] > out[i]) {
        out[i] = src[i];
        tape.winner[i] = static_cast<std::uint8_t>(p);
      }
    }
  }
  return {std::move(out), std::move(tape)};
}

template <typename T>
Tensor<T> maxout_backward(const MaxoutTape& tape, const Tensor<T>& grad_out) {
  require(grad_out.size() == tape.winner.size(),
          "maxout backward shape mismatch");
  Tensor<T> g(tape.input_shape);
  const std::size_t block = grad_out.size();
  for (std::size_t i = 0; i < block; ++i) {
    g[tape.winner[i] * block + i] = grad_out[i];
  }
  return g;
}

template <typename T>
std::pair<Tensor<T>, MaxoutTape> maxout2(const Tensor<T>& h1,
                                         const Tensor<T>& h2) {
  require(h1.shape() == h2.shape(), "maxout2 candidates differ in shape: " +
                                        shape_string(h1.shape()) + " vs " +
                                        shape_string(h2.shape()));
  Tensor<T> out(h1);
  MaxoutTape tape{h1.shape(), 2, std::vector<std::uint8_t>(h1.size(), 0)};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (h2[i] > out[i]) {
      out[i] = h2[i];
      tape.winner[i] = 1;
    }
  }
  return {std::move(out), std::move(tape)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> maxout2_backward(const MaxoutTape& tape,
                                                 const Tensor<T>& grad_out) {
  require(grad_out.shape() == tape.input_shape,
          "maxout2 backward shape mismatch");
  Tensor<T> g1(grad_out.shape());
  Tensor<T> g2(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    (tape.winner[i] ? g2 : g1)[i] = grad_out[i];
  }
  return {std::move(g1), std::move(g2)};
}

// ---------------------------------------------------------------------------
// Pooling

std::size_t pooled_extent(std::size_t bands, const PoolSpec& spec) {
  require(spec.size >= 1 && spec.step >= 1, "pool size and step must be >= 1");
  require(bands >= spec.size, "cannot pool " + std::to_string(bands) +
                                  " bands with window " +
                                  std::to_string(spec.size));
  return (bands - spec.size) / spec.step + 1;
}

template <typename T>
std::pair<Tensor<T>, PoolTape> maxpool_freq(const Tensor<T>& x,
                                            const PoolSpec& spec) {
  require(x.rank() == 3, "pool input must be [maps x bands x frames], got " +
                             shape_string(x.shape()));
  const std::size_t k = x.extent(0);
  const std::size_t b = x.extent(1);
  const std::size_t f = x.extent(2);
  const std::size_t ob = pooled_extent(b, spec);
  Tensor<T> out({k, ob, f});
  PoolTape tape{x.shape(), std::vector<std::uint32_t>(out.size())};
  for (std::size_t map = 0; map < k; ++map) {
    for (std::size_t r = 0; r < ob; ++r) {
      const std::size_t first = r * spec.step;
      T* o = out.raw() + (map * ob + r) * f;
      std::uint32_t* arg = tape.argmax.data() + (map * ob + r) * f;
      const T* src = x.raw() + (map * b + first) * f;
      std::copy_n(src, f, o);
      std::fill_n(arg, f, static_cast<std::uint32_t>(first));
      for (std::size_t j = 1; j < spec.size; ++j) {
        const T* s = src + j * f;
        for (std::size_t t = 0; t < f; ++t) {
          if (s[t] > o[t]) {
            o[t] = s[t];
            arg[t] = static_cast<std::uint32_t>(first + j);
          }
        }
      }
    }
  }
  return {std::move(out), std::move(tape)};
}

template <typename T>
Tensor<T> maxpool_freq_backward(const PoolTape& tape,
                                const Tensor<T>& grad_out) {
  require(grad_out.size() == tape.argmax.size() && grad_out.rank() == 3,
          "pool backward shape mismatch");
  const std::size_t k = grad_out.extent(0);
  const std::size_t ob = grad_out.extent(1);
  const std::size_t f = grad_out.extent(2);
  const std::size_t b = tape.input_shape[1];
  Tensor<T> g(tape.input_shape);
  for (std::size_t map = 0; map < k; ++map) {
    for (std::size_t r = 0; r < ob; ++r) {
      const std::size_t row = (map * ob + r) * f;
      for (std::size_t t = 0; t < f; ++t) {
        g[(map * b + tape.argmax[row + t]) * f + t] += grad_out[row + t];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
std::pair<Tensor<T>, DenseTape<T>> dense_forward(const Tensor<T>& x,
                                                 const DenseSpec& spec,
                                                 const Tensor<T>& weights,
                                                 const Tensor<T>& biases) {
  require(x.rank() == 2 && x.extent(0) == spec.in_width,
          "dense expects [" + std::to_string(spec.in_width) +
              " x frames], got " + shape_string(x.shape()));
  require(spec.pieces >= 1, "dense piece count must be >= 1");
  const std::size_t rows = spec.out_width * spec.pieces;
  require(weights.shape() == Shape{rows, spec.in_width},
          "dense weights must be [" + std::to_string(rows) + "x" +
              std::to_string(spec.in_width) + "], got " +
              shape_string(weights.shape()));
  require(biases.shape() == Shape{rows}, "dense biases must be [" +
                                             std::to_string(rows) + "], got " +
                                             shape_string(biases.shape()));
  const std::size_t f = x.extent(1);
  Tensor<T> affine({rows, f});
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill_n(affine.raw() + r * f, f, biases[r]);
  }
  gemm_accumulate(rows, f, spec.in_width, weights.raw(), x.raw(),
                  affine.raw());
  DenseTape<T> tape{spec, x, {}};
  if (spec.pieces == 1) return {std::move(affine), std::move(tape)};
  auto [out, mt] = maxout(affine, spec.pieces);
  tape.maxout = std::move(mt);
  return {std::move(out), std::move(tape)};
}

template <typename T>
DenseGrads<T> dense_backward(const DenseTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& weights) {
  const DenseSpec& spec = tape.spec;
  const std::size_t f = tape.input.extent(1);
  require(grad_out.shape() == Shape{spec.out_width, f},
          "dense backward expects [" + std::to_string(spec.out_width) + "x" +
              std::to_string(f) + "], got " + shape_string(grad_out.shape()));
  const Tensor<T> g_affine =
      spec.pieces == 1 ? grad_out : maxout_backward(tape.maxout, grad_out);
  const std::size_t rows = spec.out_width * spec.pieces;

  DenseGrads<T> g;
  g.grad_biases = Tensor<T>({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    const T* go = g_affine.raw() + r * f;
    for (std::size_t t = 0; t < f; ++t) acc += go[t];
    g.grad_biases[r] = acc;
  }
  const Tensor<T> x_t = transpose(tape.input);
  g.grad_weights = Tensor<T>({rows, spec.in_width});
  gemm_accumulate(rows, spec.in_width, f, g_affine.raw(), x_t.raw(),
                  g.grad_weights.raw());
  const Tensor<T> w_t = transpose(weights);
  g.grad_x = Tensor<T>({spec.in_width, f});
  gemm_accumulate(spec.in_width, f, rows, w_t.raw(), g_affine.raw(),
                  g.grad_x.raw());
  return g;
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
std::pair<Tensor<T>, DropoutTape<T>> dropout(const Tensor<T>& x, double rate,
                                             std::mt19937_64& rng,
                                             bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " +
                                std::to_string(rate));
  }
  if (!training || rate == 0.0) return {x, DropoutTape<T>{}};
  DropoutTape<T> tape{std::vector<T>(x.size())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    tape.scale[i] = u(rng) < rate ? T(0) : keep_scale;
    out[i] *= tape.scale[i];
  }
  return {std::move(out), std::move(tape)};
}

template <typename T>
Tensor<T> dropout_backward(const DropoutTape<T>& tape,
                           const Tensor<T>& grad_out) {
  if (tape.scale.empty()) return grad_out;
  require(grad_out.size() == tape.scale.size(),
          "dropout backward shape mismatch");
  Tensor<T> g(grad_out);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= tape.scale[i];
  return g;
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
Tensor<T> log_softmax_frames(const Tensor<T>& logits) {
  require(logits.rank() == 2, "softmax expects [symbols x frames], got " +
                                  shape_string(logits.shape()));
  const std::size_t a = logits.extent(0);
  const std::size_t f = logits.extent(1);
  Tensor<T> out(logits.shape());
  std::vector<T> column(a);
  for (std::size_t t = 0; t < f; ++t) {
    for (std::size_t k = 0; k < a; ++k) column[k] = logits[k * f + t];
    const T norm = reduce_logsumexp(std::span<const T>(column));
    for (std::size_t k = 0; k < a; ++k) out[k * f + t] = column[k] - norm;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_frames(const Tensor<T>& logits) {
  return map_elementwise(log_softmax_frames(logits),
                         [](T v) { return std::exp(v); });
}

template <typename T>
Tensor<T> log_softmax_backward(const Tensor<T>& log_probs,
                               const Tensor<T>& grad_log_probs) {
  require(log_probs.shape() == grad_log_probs.shape() && log_probs.rank() == 2,
          "log-softmax backward shape mismatch");
  const std::size_t a = log_probs.extent(0);
  const std::size_t f = log_probs.extent(1);
  Tensor<T> g(log_probs.shape());
  for (std::size_t t = 0; t < f; ++t) {
    T total = 0;
    for (std::size_t k = 0; k < a; ++k) total += grad_log_probs[k * f + t];
    for (std::size_t k = 0; k < a; ++k) {
      g[k * f + t] =
          grad_log_probs[k * f + t] - std::exp(log_probs[k * f + t]) * total;
    }
  }
  return g;
}

#define CONVCTC_INSTANTIATE(T)                                                \
  template std::pair<Tensor<T>, ConvTape<T>> conv2d_forward<T>(              \
      const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&); \
  template ConvGrads<T> conv2d_backward<T>(const ConvTape<T>&,               \
                                           const Tensor<T>&,                 \
                                           const Tensor<T>&);                \
  template std::pair<Tensor<T>, ReluTape> relu<T>(const Tensor<T>&);         \
  template Tensor<T> relu_backward<T>(const ReluTape&, const Tensor<T>&);    \
  template std::pair<Tensor<T>, PreluTape<T>> prelu<T>(const Tensor<T>&,     \
                                                       const Tensor<T>&);    \
  template PreluGrads<T> prelu_backward<T>(                                  \
      const PreluTape<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template std::pair<Tensor<T>, MaxoutTape> maxout<T>(const Tensor<T>&,      \
                                                      std::size_t);          \
  template Tensor<T> maxout_backward<T>(const MaxoutTape&, const Tensor<T>&); \
  template std::pair<Tensor<T>, MaxoutTape> maxout2<T>(const Tensor<T>&,     \
                                                       const Tensor<T>&);    \
  template std::pair<Tensor<T>, Tensor<T>> maxout2_backward<T>(              \
      const MaxoutTape&, const Tensor<T>&);                                  \
  template std::pair<Tensor<T>, PoolTape> maxpool_freq<T>(const Tensor<T>&,  \
                                                          const PoolSpec&);  \
  template Tensor<T> maxpool_freq_backward<T>(const PoolTape&,               \
                                              const Tensor<T>&);             \
  template std::pair<Tensor<T>, DenseTape<T>> dense_forward<T>(              \
      const Tensor<T>&, const DenseSpec&, const Tensor<T>&, const Tensor<T>&); \
  template DenseGrads<T> dense_backward<T>(const DenseTape<T>&,              \
                                           const Tensor<T>&,                 \
                                           const Tensor<T>&);                \
  template std::pair<Tensor<T>, DropoutTape<T>> dropout<T>(                  \
      const Tensor<T>&, double, std::mt19937_64&, bool);                     \
  template Tensor<T> dropout_backward<T>(const DropoutTape<T>&,              \
                                         const Tensor<T>&);                  \
  template Tensor<T> softmax_frames<T>(const Tensor<T>&);                    \
  template Tensor<T> log_softmax_frames<T>(const Tensor<T>&);                \
  template Tensor<T> log_softmax_backward<T>(const Tensor<T>&,               \
                                             const Tensor<T>&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
