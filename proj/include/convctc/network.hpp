#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "convctc/layers.hpp"
#include "convctc/tensor.hpp"

namespace convctc {

enum class LayerKind { conv, pool, dense, dropout };
enum class Activation { linear, relu, prelu, maxout };

/// One entry of the ordered layer stack. Only the fields relevant to `kind`
/// are meaningful.
struct LayerConfig {
  LayerKind kind = LayerKind::conv;
  // conv: feature maps; dense: units
  std::size_t width = 0;
  std::size_t filter_freq = 3;
  std::size_t filter_time = 5;
  Padding freq_padding = Padding::same;
  Activation activation = Activation::maxout;
  std::size_t pieces = 2;  // maxout only
  // pool
  std::size_t pool_size = 3;
  std::size_t pool_step = 3;
  // dropout
  double rate = 0.0;

  std::size_t bank_size() const {
    return activation == Activation::maxout ? pieces : 1;
  }
};

struct NetworkConfig {
  std::size_t input_channels = 3;
  std::size_t input_bands = 41;
  std::size_t alphabet_size = 62;
  std::vector<LayerConfig> layers;

  /// Throws ShapeError / std::invalid_argument if the stack is inconsistent
  /// (unknown geometry, final width != alphabet_size, conv after dense ...).
  void validate() const;

  /// Overrides the rate of every dropout layer.
  void set_dropout(double rate);
};

/// Ten 3x5 maxout conv layers (128 maps x4, then 256 x6), 3x1 frequency
/// pooling after the first, three 1024-unit maxout dense layers, dropout 0.3
/// after every hidden layer, and a linear projection onto 62 symbols.
NetworkConfig default_network_config();

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

// ---------------------------------------------------------------------------
// Parameters

enum class ParamClass { weight, bias, slope };

template <typename T>
struct NamedTensor {
  std::string name;
  ParamClass cls = ParamClass::weight;
  std::size_t layer = 0;
  Tensor<T> value;
};

/// Every trainable tensor in a stable order: layer index ascending, then
/// weight, bias, slope. Names are "layer<i>.weight" etc. Gradients use the
/// same container and ordering.
template <typename T>
struct ParameterSet {
  std::vector<NamedTensor<T>> entries;

  std::size_t size() const { return entries.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return entries[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return entries[i]; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  std::size_t scalar_count() const;

  ParameterSet zeros_like() const;
  void accumulate(const ParameterSet& other);
  void scale(T factor);
  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries) {
      out.entries.push_back({e.name, e.cls, e.layer, e.value.template cast<U>()});
    }
    return out;
  }
};

struct ParamShape {
  std::string name;
  ParamClass cls;
  std::size_t layer;
  Shape shape;
};

/// Shapes of every trainable tensor implied by a validated config.
std::vector<ParamShape> parameter_shapes(const NetworkConfig& config);

/// Checks that a parameter set matches the config exactly (names, order,
/// shapes); throws ShapeError otherwise.
template <typename T>
void check_parameters(const NetworkConfig& config,
                      const ParameterSet<T>& params);

// ---------------------------------------------------------------------------
// Shape inference

struct LayerGeometry {
  Shape input;   // [maps x bands x f] or [width x f], f symbolic as 1
  Shape output;
};

/// Per-layer input/output shapes for an input of `frames` frames.
std::vector<LayerGeometry> infer_geometry(const NetworkConfig& config,
                                          std::size_t frames);

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { training, inference };

template <typename T>
struct LayerCache {
  std::size_t layer = 0;
  std::variant<std::monostate, ConvTape<T>, PoolTape, DenseTape<T>,
               DropoutTape<T>>
      op;
  std::variant<std::monostate, ReluTape, PreluTape<T>, MaxoutTape> act;
  bool flattened_input = false;  // dense layer fed by the conv stage
  Shape input_shape;
  Shape output_shape;
};

template <typename T>
struct ForwardPass {
  Tensor<T> log_probs;  // [alphabet x frames]
  std::vector<LayerCache<T>> tapes;
  std::size_t valid_frames = 0;
};

template <typename T>
struct BackwardResult {
  ParameterSet<T> grads;
  Tensor<T> grad_input;
};

/// Runs the stack on x = [channels x bands x frames]. Frames at or beyond
/// `valid_frames` (default: all) are treated as padding: every layer output
/// is zeroed there, so the result on the valid prefix is identical to running
/// on the unpadded input. `rng` is required in training mode when the stack
/// contains dropout.
template <typename T>
ForwardPass<T> network_forward(const Tensor<T>& x, const NetworkConfig& config,
                               const ParameterSet<T>& params, Mode mode,
                               std::mt19937_64* rng = nullptr,
                               std::optional<std::size_t> valid_frames = {});

/// Backpropagates a gradient w.r.t. the log-probabilities.
template <typename T>
BackwardResult<T> network_backward(const ForwardPass<T>& pass,
                                   const NetworkConfig& config,
                                   const ParameterSet<T>& params,
                                   const Tensor<T>& grad_log_probs);

/// Replaceable kernels for fault-injection tests.
template <typename T>
struct BackwardHooks {
  std::function<ConvGrads<T>(const ConvTape<T>&, const Tensor<T>&,
                             const Tensor<T>&)>
      conv_backward;
};

/// Backpropagates a gradient w.r.t. the pre-softmax logits.
template <typename T>
BackwardResult<T> network_backward_logits(
    const ForwardPass<T>& pass, const NetworkConfig& config,
    const ParameterSet<T>& params, const Tensor<T>& grad_logits,
    const BackwardHooks<T>* hooks = nullptr);

}  // namespace convctc
