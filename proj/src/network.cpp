#include "convctc/network.hpp"

#include <stdexcept>

namespace convctc {

namespace {

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

[[noreturn]] void fail_layer(std::size_t i, LayerKind kind,
                             const std::string& what) {
  throw ShapeError("layer " + std::to_string(i) + " (" + to_string(kind) +
                   "): " + what);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::prelu: return "prelu";
    case Activation::maxout: return "maxout";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Config

std::vector<LayerGeometry> infer_geometry(const NetworkConfig& config,
                                          std::size_t frames) {
  if (config.input_channels == 0 || config.input_bands == 0) {
    throw ShapeError("input channels and bands must be positive");
  }
  if (frames == 0) throw ShapeError("frame count must be positive");
  std::vector<LayerGeometry> out;
  Shape cur{config.input_channels, config.input_bands, frames};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    LayerGeometry g{cur, {}};
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) fail_layer(i, l.kind, "conv after a dense layer");
        if (l.width == 0 || l.filter_freq == 0 || l.filter_time == 0) {
          fail_layer(i, l.kind, "maps and filter extents must be positive");
        }
        if (l.activation == Activation::maxout && l.pieces < 1) {
          fail_layer(i, l.kind, "maxout needs at least one piece");
        }
        try {
          cur = {l.width,
                 conv_output_extent(cur[1], l.filter_freq, l.freq_padding),
                 frames};
        } catch (const ShapeError& e) {
          fail_layer(i, l.kind, e.what());
        }
        break;
      }
      case LayerKind::pool: {
        if (cur.size() != 3) fail_layer(i, l.kind, "pool after a dense layer");
        try {
          cur = {cur[0], pooled_extent(cur[1], {l.pool_size, l.pool_step}),
                 frames};
        } catch (const ShapeError& e) {
          fail_layer(i, l.kind, e.what());
        }
        break;
      }
      case LayerKind::dense: {
        if (l.width == 0) fail_layer(i, l.kind, "units must be positive");
        if (l.activation == Activation::maxout && l.pieces < 1) {
          fail_layer(i, l.kind, "maxout needs at least one piece");
        }
        cur = {l.width, frames};
        break;
      }
      case LayerKind::dropout: {
        if (!(l.rate >= 0.0 && l.rate < 1.0)) {
          fail_layer(i, l.kind, "rate must lie in [0, 1)");
        }
        break;
      }
    }
    g.output = cur;
    out.push_back(std::move(g));
  }
  return out;
}

void NetworkConfig::validate() const {
  if (alphabet_size < 2) {
    throw std::invalid_argument("alphabet_size must be at least 2");
  }
  const auto geo = infer_geometry(*this, 1);
  Shape last = geo.empty() ? Shape{input_channels, input_bands, 1}
                           : geo.back().output;
  const std::size_t width = last.size() == 3 ? last[0] * last[1] : last[0];
  if (width != alphabet_size) {
    throw ShapeError("final layer width " + std::to_string(width) +
                     " does not match alphabet_size " +
                     std::to_string(alphabet_size));
  }
}

void NetworkConfig::set_dropout(double rate) {
  for (auto& l : layers) {
    if (l.kind == LayerKind::dropout) l.rate = rate;
  }
}

NetworkConfig default_network_config() {
  NetworkConfig c;
  c.input_channels = 3;
  c.input_bands = 41;
  c.alphabet_size = 62;
  auto conv = [](std::size_t maps) {
    LayerConfig l;
    l.kind = LayerKind::conv;
    l.width = maps;
    l.filter_freq = 3;
    l.filter_time = 5;
    l.activation = Activation::maxout;
    l.pieces = 2;
    return l;
  };
  auto drop = [] {
    LayerConfig l;
    l.kind = LayerKind::dropout;
    l.rate = 0.3;
    return l;
  };
  for (int i = 0; i < 10; ++i) {
    c.layers.push_back(conv(i < 4 ? 128 : 256));
    if (i == 0) {
      LayerConfig pool;
      pool.kind = LayerKind::pool;
      pool.pool_size = 3;
      pool.pool_step = 3;
      c.layers.push_back(pool);
    }
    c.layers.push_back(drop());
  }
  for (int i = 0; i < 3; ++i) {
    LayerConfig d;
    d.kind = LayerKind::dense;
    d.width = 1024;
    d.activation = Activation::maxout;
    d.pieces = 2;
    c.layers.push_back(d);
    c.layers.push_back(drop());
  }
  LayerConfig out;
  out.kind = LayerKind::dense;
  out.width = 62;
  out.activation = Activation::linear;
  c.layers.push_back(out);
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamShape> parameter_shapes(const NetworkConfig& config) {
  const auto geo = infer_geometry(config, 1);
  std::vector<ParamShape> out;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const auto& in = geo[i].input;
    const std::string p = layer_prefix(i);
    const std::size_t rows = l.width * l.bank_size();
    if (l.kind == LayerKind::conv) {
      out.push_back({p + ".weight", ParamClass::weight, i,
                     {rows, in[0], l.filter_freq, l.filter_time}});
      out.push_back({p + ".bias", ParamClass::bias, i, {rows}});
    } else if (l.kind == LayerKind::dense) {
      const std::size_t in_width = in.size() == 3 ? in[0] * in[1] : in[0];
      out.push_back({p + ".weight", ParamClass::weight, i, {rows, in_width}});
      out.push_back({p + ".bias", ParamClass::bias, i, {rows}});
    } else {
      continue;
    }
    if (l.activation == Activation::prelu) {
      out.push_back({p + ".slope", ParamClass::slope, i, {l.width}});
    }
  }
  return out;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  for (auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (const auto& e : entries) {
    out.entries.push_back({e.name, e.cls, e.layer, Tensor<T>(e.value.shape())});
  }
  return out;
}

template <typename T>
void ParameterSet<T>::accumulate(const ParameterSet& other) {
  if (other.size() != size()) {
    throw ShapeError("parameter sets differ in length");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    add_inplace(entries[i].value, other.entries[i].value);
  }
}

template <typename T>
void ParameterSet<T>::scale(T factor) {
  for (auto& e : entries) scale_inplace(e.value, factor);
}

template <typename T>
void check_parameters(const NetworkConfig& config,
                      const ParameterSet<T>& params) {
  const auto shapes = parameter_shapes(config);
  if (shapes.size() != params.size()) {
    throw ShapeError("config implies " + std::to_string(shapes.size()) +
                     " parameter tensors, found " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& want = shapes[i];
    const auto& have = params[i];
    if (want.name != have.name) {
      throw ShapeError("parameter " + std::to_string(i) + " should be " +
                       want.name + ", found " + have.name);
    }
    if (want.shape != have.value.shape()) {
      throw ShapeError("parameter " + want.name + " should be " +
                       shape_string(want.shape) + ", found " +
                       shape_string(have.value.shape()));
    }
  }
}

// ---------------------------------------------------------------------------
// Forward

template <typename T>
ForwardPass<T> network_forward(const Tensor<T>& x, const NetworkConfig& config,
                               const ParameterSet<T>& params, Mode mode,
                               std::mt19937_64* rng,
                               std::optional<std::size_t> valid_frames) {
  if (x.rank() != 3 || x.extent(0) != config.input_channels ||
      x.extent(1) != config.input_bands) {
    throw ShapeError("network expects input [" +
                     std::to_string(config.input_channels) + "x" +
                     std::to_string(config.input_bands) + "xframes], got " +
                     shape_string(x.shape()));
  }
  const std::size_t frames = x.extent(2);
  ForwardPass<T> pass;
  pass.valid_frames = valid_frames.value_or(frames);
  if (pass.valid_frames == 0 || pass.valid_frames > frames) {
    throw ShapeError("valid frame count " + std::to_string(pass.valid_frames) +
                     " outside [1, " + std::to_string(frames) + "]");
  }
  const bool masked = pass.valid_frames < frames;
  const bool training = mode == Mode::training;

  Tensor<T> cur = x;
  if (masked) zero_frames_from(cur, pass.valid_frames);
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const std::string p = layer_prefix(i);
    LayerCache<T> cache;
    cache.layer = i;
    cache.input_shape = cur.shape();
    try {
      switch (l.kind) {
        case LayerKind::conv: {
          if (cur.rank() != 3) throw ShapeError("conv needs a rank-3 input");
          ConvSpec spec{cur.extent(0), l.width * l.bank_size(), l.filter_freq,
                        l.filter_time, l.freq_padding, Padding::same};
          auto [h, tape] = conv2d_forward(cur, spec, params.get(p + ".weight"),
                                          params.get(p + ".bias"));
          cache.op = std::move(tape);
          switch (l.activation) {
            case Activation::maxout: {
              auto [o, t] = maxout(h, l.pieces);
              cur = std::move(o);
              cache.act = std::move(t);
              break;
            }
            case Activation::relu: {
              auto [o, t] = relu(h);
              cur = std::move(o);
              cache.act = std::move(t);
              break;
            }
            case Activation::prelu: {
              auto [o, t] = prelu(h, params.get(p + ".slope"));
              cur = std::move(o);
              cache.act = std::move(t);
              break;
            }
            case Activation::linear:
              cur = std::move(h);
              break;
          }
          break;
        }
        case LayerKind::pool: {
          auto [o, tape] = maxpool_freq(cur, PoolSpec{l.pool_size, l.pool_step});
          cur = std::move(o);
          cache.op = std::move(tape);
          break;
        }
        case LayerKind::dense: {
          if (cur.rank() == 3) {
            // maps-major, bands-minor: a pure reshape of [maps x bands x f]
            cur.reshape({cur.extent(0) * cur.extent(1), cur.extent(2)});
            cache.flattened_input = true;
          }
          DenseSpec spec{cur.extent(0), l.width,
                         l.activation == Activation::maxout ? l.pieces : 1};
          auto [h, tape] = dense_forward(cur, spec, params.get(p + ".weight"),
                                         params.get(p + ".bias"));
          cache.op = std::move(tape);
          if (l.activation == Activation::relu) {
            auto [o, t] = relu(h);
            cur = std::move(o);
            cache.act = std::move(t);
          } else if (l.activation == Activation::prelu) {
            auto [o, t] = prelu(h, params.get(p + ".slope"));
            cur = std::move(o);
            cache.act = std::move(t);
          } else {
            cur = std::move(h);
          }
          break;
        }
        case LayerKind::dropout: {
          if (training && l.rate > 0.0 && rng == nullptr) {
            throw std::invalid_argument("dropout in training mode needs an rng");
          }
          std::mt19937_64 unused;
          auto [o, tape] =
              dropout(cur, l.rate, rng ? *rng : unused, training);
          cur = std::move(o);
          cache.op = std::move(tape);
          break;
        }
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" +
                       to_string(l.kind) + "): " + e.what());
    } catch (const std::out_of_range& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" +
                       to_string(l.kind) + "): " + e.what());
    }
    if (masked) zero_frames_from(cur, pass.valid_frames);
    cache.output_shape = cur.shape();
    pass.tapes.push_back(std::move(cache));
  }
  if (cur.rank() == 3) cur.reshape({cur.extent(0) * cur.extent(1), frames});
  if (cur.extent(0) != config.alphabet_size) {
    throw ShapeError("network output width " + std::to_string(cur.extent(0)) +
                     " differs from alphabet_size " +
                     std::to_string(config.alphabet_size));
  }
  pass.log_probs = log_softmax_frames(cur);
  return pass;
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
BackwardResult<T> network_backward_logits(const ForwardPass<T>& pass,
                                          const NetworkConfig& config,
                                          const ParameterSet<T>& params,
                                          const Tensor<T>& grad_logits,
                                          const BackwardHooks<T>* hooks) {
  if (grad_logits.shape() != pass.log_probs.shape()) {
    throw ShapeError("gradient " + shape_string(grad_logits.shape()) +
                     " does not match network output " +
                     shape_string(pass.log_probs.shape()));
  }
  if (pass.tapes.size() != config.layers.size()) {
    throw ShapeError("forward tapes do not match the config");
  }
  BackwardResult<T> result;
  result.grads = params.zeros_like();
  const std::size_t frames = pass.log_probs.extent(1);
  const bool masked = pass.valid_frames < frames;

  Tensor<T> g = grad_logits;
  for (std::size_t idx = pass.tapes.size(); idx-- > 0;) {
    const auto& cache = pass.tapes[idx];
    const auto& l = config.layers[cache.layer];
    const std::string p = layer_prefix(cache.layer);
    g.reshape(cache.output_shape);
    if (masked) zero_frames_from(g, pass.valid_frames);
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& tape = std::get<ConvTape<T>>(cache.op);
        Tensor<T> gh;
        switch (l.activation) {
          case Activation::maxout:
            gh = maxout_backward(std::get<MaxoutTape>(cache.act), g);
            break;
          case Activation::relu:
            gh = relu_backward(std::get<ReluTape>(cache.act), g);
            break;
          case Activation::prelu: {
            auto pg = prelu_backward(std::get<PreluTape<T>>(cache.act), g,
                                     params.get(p + ".slope"));
            gh = std::move(pg.grad_h);
            result.grads.get(p + ".slope") = std::move(pg.grad_alpha);
            break;
          }
          case Activation::linear:
            gh = std::move(g);
            break;
        }
        const auto& w = params.get(p + ".weight");
        auto cg = hooks && hooks->conv_backward
                      ? hooks->conv_backward(tape, gh, w)
                      : conv2d_backward(tape, gh, w);
        result.grads.get(p + ".weight") = std::move(cg.grad_weights);
        result.grads.get(p + ".bias") = std::move(cg.grad_biases);
        g = std::move(cg.grad_x);
        break;
      }
      case LayerKind::pool: {
        g = maxpool_freq_backward(std::get<PoolTape>(cache.op), g);
        break;
      }
      case LayerKind::dense: {
        const auto& tape = std::get<DenseTape<T>>(cache.op);
        if (l.activation == Activation::relu) {
          g = relu_backward(std::get<ReluTape>(cache.act), g);
        } else if (l.activation == Activation::prelu) {
          auto pg = prelu_backward(std::get<PreluTape<T>>(cache.act), g,
                                   params.get(p + ".slope"));
          g = std::move(pg.grad_h);
          result.grads.get(p + ".slope") = std::move(pg.grad_alpha);
        }
        auto dg = dense_backward(tape, g, params.get(p + ".weight"));
        result.grads.get(p + ".weight") = std::move(dg.grad_weights);
        result.grads.get(p + ".bias") = std::move(dg.grad_biases);
        g = std::move(dg.grad_x);
        if (cache.flattened_input) g.reshape(cache.input_shape);
        break;
      }
      case LayerKind::dropout: {
        g = dropout_backward(std::get<DropoutTape<T>>(cache.op), g);
        break;
      }
    }
  }
  g.reshape({config.input_channels, config.input_bands, frames});
  if (masked) zero_frames_from(g, pass.valid_frames);
  result.grad_input = std::move(g);
  return result;
}

template <typename T>
BackwardResult<T> network_backward(const ForwardPass<T>& pass,
                                   const NetworkConfig& config,
                                   const ParameterSet<T>& params,
                                   const Tensor<T>& grad_log_probs) {
  return network_backward_logits(
      pass, config, params, log_softmax_backward(pass.log_probs, grad_log_probs));
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template struct ParameterSet<T>;                                             \
  template void check_parameters<T>(const NetworkConfig&,                      \
                                    const ParameterSet<T>&);                   \
  template ForwardPass<T> network_forward<T>(                                  \
      const Tensor<T>&, const NetworkConfig&, const ParameterSet<T>&, Mode,    \
      std::mt19937_64*, std::optional<std::size_t>);                           \
  template BackwardResult<T> network_backward<T>(                              \
      const ForwardPass<T>&, const NetworkConfig&, const ParameterSet<T>&,     \
      const Tensor<T>&);                                                       \
  template BackwardResult<T> network_backward_logits<T>(                       \
      const ForwardPass<T>&, const NetworkConfig&, const ParameterSet<T>&,     \
      const Tensor<T>&, const BackwardHooks<T>*);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
