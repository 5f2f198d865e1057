#pragma once

// Forward and backward passes for the individual layer types. Each forward
// returns the output together with a tape holding whatever the matching
// backward call needs; backward consumes exactly that tape.
//
// Feature tensors are laid out [maps x bands x frames] for the convolutional
// stage and [width x frames] for the fully connected stage.

#include <cstdint>
#include <random>
#include <vector>

#include "convctc/tensor.hpp"

namespace convctc {

enum class Padding { same, valid };

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_maps = 1;  // every filter of the bank, all maxout pieces
  std::size_t filter_freq = 1;
  std::size_t filter_time = 1;
  Padding freq_padding = Padding::same;
  Padding time_padding = Padding::same;
};

struct PoolSpec {
  std::size_t size = 3;
  std::size_t step = 3;
};

struct DenseSpec {
  std::size_t in_width = 1;
  std::size_t out_width = 1;
  std::size_t pieces = 1;  // 1 = plain affine, >1 = maxout over pieces
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, stride 1, zero padding)

template <typename T>
struct ConvTape {
  ConvSpec spec;
  Shape input_shape;
  std::size_t out_bands = 0;
  std::size_t out_frames = 0;
  std::size_t pad_freq = 0;
  std::size_t pad_time = 0;
  Tensor<T> cols;  // [c*m*n x out_bands*out_frames]
};

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_weights;
  Tensor<T> grad_biases;
};

/// x: [c x b x f], weights: [k x c x m x n], biases: [k] -> [k x b' x f'].
template <typename T>
std::pair<Tensor<T>, ConvTape<T>> conv2d_forward(const Tensor<T>& x,
                                                 const ConvSpec& spec,
                                                 const Tensor<T>& weights,
                                                 const Tensor<T>& biases);

template <typename T>
ConvGrads<T> conv2d_backward(const ConvTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& weights);

/// Output extent of one axis under a padding policy; throws when the filter
/// does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t filter,
                               Padding padding);

// ---------------------------------------------------------------------------
// Activations

struct ReluTape {
  Shape shape;
  std::vector<std::uint8_t> positive;
};

template <typename T>
std::pair<Tensor<T>, ReluTape> relu(const Tensor<T>& h);

template <typename T>
Tensor<T> relu_backward(const ReluTape& tape, const Tensor<T>& grad_out);

template <typename T>
struct PreluTape {
  Tensor<T> input;
};

template <typename T>
struct PreluGrads {
  Tensor<T> grad_h;
  Tensor<T> grad_alpha;
};

/// One slope per feature map; the first axis of h indexes maps.
template <typename T>
std::pair<Tensor<T>, PreluTape<T>> prelu(const Tensor<T>& h,
                                         const Tensor<T>& alpha);

template <typename T>
PreluGrads<T> prelu_backward(const PreluTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& alpha);

struct MaxoutTape {
  Shape input_shape;
  std::size_t pieces = 0;
  std::vector<std::uint8_t> winner;  // piece index per output element
};

/// h: [pieces*k x ...] -> [k x ...]; piece p occupies rows p*k .. p*k+k-1.
/// Ties go to the lowest piece.
template <typename T>
std::pair<Tensor<T>, MaxoutTape> maxout(const Tensor<T>& h,
                                        std::size_t pieces);

template <typename T>
Tensor<T> maxout_backward(const MaxoutTape& tape, const Tensor<T>& grad_out);

/// Two-candidate maxout on separately held candidates.
template <typename T>
std::pair<Tensor<T>, MaxoutTape> maxout2(const Tensor<T>& h1,
                                         const Tensor<T>& h2);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> maxout2_backward(const MaxoutTape& tape,
                                                 const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Frequency max pooling

struct PoolTape {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // source band per output element
};

std::size_t pooled_extent(std::size_t bands, const PoolSpec& spec);

/// x: [k x b x f] -> [k x ((b - p) / s + 1) x f]; trailing bands that do not
/// fill a window are dropped.
template <typename T>
std::pair<Tensor<T>, PoolTape> maxpool_freq(const Tensor<T>& x,
                                            const PoolSpec& spec);

template <typename T>
Tensor<T> maxpool_freq_backward(const PoolTape& tape,
                                const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Time-distributed fully connected layer

template <typename T>
struct DenseTape {
  DenseSpec spec;
  Tensor<T> input;
  MaxoutTape maxout;
};

template <typename T>
struct DenseGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_weights;
  Tensor<T> grad_biases;
};

/// x: [d x f], weights: [pieces*d' x d], biases: [pieces*d'] -> [d' x f].
template <typename T>
std::pair<Tensor<T>, DenseTape<T>> dense_forward(const Tensor<T>& x,
                                                 const DenseSpec& spec,
                                                 const Tensor<T>& weights,
                                                 const Tensor<T>& biases);

template <typename T>
DenseGrads<T> dense_backward(const DenseTape<T>& tape,
                             const Tensor<T>& grad_out,
                             const Tensor<T>& weights);

// ---------------------------------------------------------------------------
// Inverted dropout

template <typename T>
struct DropoutTape {
  std::vector<T> scale;  // empty when the layer acted as identity
};

template <typename T>
std::pair<Tensor<T>, DropoutTape<T>> dropout(const Tensor<T>& x, double rate,
                                             std::mt19937_64& rng,
                                             bool training);

template <typename T>
Tensor<T> dropout_backward(const DropoutTape<T>& tape,
                           const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Per-frame softmax over the first axis of [A x f]

template <typename T>
Tensor<T> softmax_frames(const Tensor<T>& logits);

template <typename T>
Tensor<T> log_softmax_frames(const Tensor<T>& logits);

/// Gradient w.r.t. logits given the gradient w.r.t. log-softmax outputs.
template <typename T>
Tensor<T> log_softmax_backward(const Tensor<T>& log_probs,
                               const Tensor<T>& grad_log_probs);

}  // namespace convctc
