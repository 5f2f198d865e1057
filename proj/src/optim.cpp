#include "convctc/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace convctc {

std::string to_string(Stage stage) {
  return stage == Stage::adam ? "adam" : "sgd";
}

Stage parse_stage(const std::string& text) {
  if (text == "adam") return Stage::adam;
  if (text == "sgd") return Stage::sgd;
  throw std::invalid_argument("unknown stage '" + text + "' (adam|sgd)");
}

OptimizerConfig stage_defaults(Stage stage) {
  OptimizerConfig c;
  c.stage = stage;
  if (stage == Stage::sgd) {
    c.lr = kSgdLearningRate;
    c.l2 = kFineTuneL2;
  }
  return c;
}

template <typename T>
OptimizerState<T> OptimizerState<T>::fresh(const OptimizerConfig& config,
                                           const ParameterSet<T>& params) {
  OptimizerState s;
  s.config = config;
  for (const auto& e : params.entries) {
    s.first_moment.emplace_back(e.value.shape());
    s.second_moment.emplace_back(e.value.shape());
  }
  return s;
}

template <typename T>
ParameterSet<T> init_uniform(const std::vector<ParamShape>& shapes,
                             std::mt19937_64& rng, double lo, double hi) {
  if (!(lo < hi)) {
    throw std::invalid_argument("init_uniform needs lo < hi");
  }
  std::uniform_real_distribution<double> u(lo, hi);
  ParameterSet<T> params;
  for (const auto& s : shapes) {
    Tensor<T> t(s.shape);
    switch (s.cls) {
      case ParamClass::weight:
        for (auto& v : t.data()) v = static_cast<T>(u(rng));
        break;
      case ParamClass::bias:
        break;
      case ParamClass::slope:
        t.fill(static_cast<T>(kPreluInitSlope));
        break;
    }
    params.entries.push_back({s.name, s.cls, s.layer, std::move(t)});
  }
  return params;
}

namespace {

template <typename T>
void check_alignment(const ParameterSet<T>& params,
                     const ParameterSet<T>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("gradient set has " + std::to_string(grads.size()) +
                     " tensors, parameters " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.shape() != grads[i].value.shape()) {
      throw ShapeError("gradient for " + params[i].name + " is " +
                       shape_string(grads[i].value.shape()) + ", expected " +
                       shape_string(params[i].value.shape()));
    }
  }
}

}  // namespace

template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads,
               OptimizerState<T>& state) {
  check_alignment(params, grads);
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer state does not match the parameter set");
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr);
  const T eps = static_cast<T>(c.eps);
  const T l2 = static_cast<T>(c.l2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const auto& g = grads[i].value;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("moment shape mismatch for " + params[i].name);
    }
    const bool decay = params[i].cls == ParamClass::weight && l2 != T(0);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T gj = decay ? g[j] + l2 * p[j] : g[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const T m_hat = m[j] / correction1;
      const T v_hat = v[j] / correction2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void sgd_step(ParameterSet<T>& params, const ParameterSet<T>& grads,
              OptimizerState<T>& state) {
  check_alignment(params, grads);
  ++state.step;
  const T lr = static_cast<T>(state.config.lr);
  const T l2 = static_cast<T>(state.config.l2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const auto& g = grads[i].value;
    if (params[i].cls == ParamClass::weight && l2 != T(0)) {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * (g[j] + l2 * p[j]);
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
  }
}

template <typename T>
double clip_global_norm(ParameterSet<T>& grads, double max_norm) {
  double sq = 0;
  for (const auto& e : grads.entries) {
    for (T v : e.value.data()) sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    grads.scale(static_cast<T>(max_norm / norm));
  }
  return norm;
}

template <typename T>
void optimizer_step(ParameterSet<T>& params, ParameterSet<T>& grads,
                    OptimizerState<T>& state) {
  if (state.config.clip_norm > 0) clip_global_norm(grads, state.config.clip_norm);
  if (state.config.stage == Stage::adam) {
    adam_step(params, grads, state);
  } else {
    sgd_step(params, grads, state);
  }
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template struct OptimizerState<T>;                                           \
  template ParameterSet<T> init_uniform<T>(const std::vector<ParamShape>&,     \
                                           std::mt19937_64&, double, double);  \
  template void adam_step<T>(ParameterSet<T>&, const ParameterSet<T>&,         \
                             OptimizerState<T>&);                              \
  template void sgd_step<T>(ParameterSet<T>&, const ParameterSet<T>&,          \
                            OptimizerState<T>&);                               \
  template void optimizer_step<T>(ParameterSet<T>&, ParameterSet<T>&,          \
                                  OptimizerState<T>&);                         \
  template double clip_global_norm<T>(ParameterSet<T>&, double);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
