#include "convctc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "convctc/ctc.hpp"
#include "convctc/layers.hpp"
#include "convctc/optim.hpp"

namespace convctc {

void print_suite(std::ostream& os, const SuiteResult& r) {
  for (const auto& d : r.details) os << "  " << d << '\n';
  os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.checks
     << " checks";
  if (r.skipped > 0) os << ", " << r.skipped << " skipped";
  os << ", max error " << std::scientific << std::setprecision(3)
     << r.max_error << std::defaultfloat << '\n';
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

LabelSequence random_target(std::mt19937_64& rng, std::size_t length,
                            std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> sym(1, alphabet - 1);
  LabelSequence z(length);
  for (auto& s : z) s = sym(rng);
  return z;
}

Tensor<double> random_logits(std::mt19937_64& rng, std::size_t a,
                             std::size_t frames, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t({a, frames});
  for (auto& v : t.data()) v = n(rng);
  return t;
}

double rel_error(double a, double n) {
  return std::abs(a - n) /
         std::max({std::abs(a), std::abs(n), kGradcheckScaleFloor});
}

// Discrete choices made by the forward pass; a finite difference is only
// meaningful when these agree at x - h and x + h.
std::vector<std::uint32_t> activation_pattern(const ForwardPass<double>& pass) {
  std::vector<std::uint32_t> sig;
  for (const auto& c : pass.tapes) {
    if (const auto* m = std::get_if<MaxoutTape>(&c.act)) {
      sig.insert(sig.end(), m->winner.begin(), m->winner.end());
    } else if (const auto* r = std::get_if<ReluTape>(&c.act)) {
      sig.insert(sig.end(), r->positive.begin(), r->positive.end());
    } else if (const auto* p = std::get_if<PreluTape<double>>(&c.act)) {
      for (double v : p->input.data()) sig.push_back(v > 0.0);
    }
    if (const auto* p = std::get_if<PoolTape>(&c.op)) {
      sig.insert(sig.end(), p->argmax.begin(), p->argmax.end());
    } else if (const auto* d = std::get_if<DenseTape<double>>(&c.op)) {
      sig.insert(sig.end(), d->maxout.winner.begin(), d->maxout.winner.end());
    }
  }
  return sig;
}

void check_ctc_logits(const GradcheckOptions& opt, std::mt19937_64& rng,
                      SuiteResult& r) {
  std::uniform_int_distribution<std::size_t> frames_d(1, 8);
  std::uniform_int_distribution<std::size_t> alpha_d(2, 5);
  double worst = 0.0;
  std::size_t checks = 0;
  std::size_t done = 0;
  while (done < opt.ctc_instances) {
    const std::size_t frames = frames_d(rng);
    const std::size_t a = alpha_d(rng);
    std::uniform_int_distribution<std::size_t> len_d(0, frames);
    const LabelSequence z = random_target(rng, len_d(rng), a);
    if (min_frames_for(z) > frames) continue;
    ++done;
    Tensor<double> logits = random_logits(rng, a, frames, 1.5);
    auto loss_at = [&](const Tensor<double>& x) {
      return ctc_loss(log_softmax_frames(x), z).loss;
    };
    const auto lp = log_softmax_frames(logits);
    const auto res = ctc_loss(lp, z);
    const auto g = ctc_grad(res.lattice, lp);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double x0 = logits[i];
      logits[i] = x0 + opt.step;
      const double up = loss_at(logits);
      logits[i] = x0 - opt.step;
      const double down = loss_at(logits);
      logits[i] = x0;
      const double num = (up - down) / (2 * opt.step);
      worst = std::max(worst, rel_error(g[i], num));
      ++checks;
    }
  }
  r.checks += checks;
  r.max_error = std::max(r.max_error, worst);
  r.details.push_back("ctc wrt logits: " + std::to_string(done) +
                      " instances, " + std::to_string(checks) +
                      " coordinates, max rel error " + fmt(worst));
}

void check_network(const std::string& label, const NetworkConfig& config,
                   std::size_t frames, const GradcheckOptions& opt,
                   std::mt19937_64& rng, SuiteResult& r) {
  config.validate();
  ParameterSet<double> params;
  {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::uniform_real_distribution<double> slope(0.05, 0.5);
    for (const auto& s : parameter_shapes(config)) {
      Tensor<double> t(s.shape);
      for (auto& v : t.data()) v = s.cls == ParamClass::slope ? slope(rng) : u(rng);
      params.entries.push_back({s.name, s.cls, s.layer, std::move(t)});
    }
  }
  Tensor<double> x({config.input_channels, config.input_bands, frames});
  {
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : x.data()) v = n(rng);
  }
  const LabelSequence z = random_target(rng, 3, config.alphabet_size);
  const std::mt19937_64 dropout_seed(rng());

  auto forward = [&](const ParameterSet<double>& p) {
    std::mt19937_64 d = dropout_seed;
    return network_forward(x, config, p, Mode::training, &d);
  };
  const auto pass = forward(params);
  const auto res = ctc_loss(pass.log_probs, z);
  const auto g = ctc_grad(res.lattice, pass.log_probs);
  const auto back = network_backward_logits(pass, config, params, g, opt.hooks);

  std::size_t checks = 0;
  std::size_t skipped = 0;
  double worst = 0.0;
  std::string worst_where;
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto& value = params[e].value;
    const auto& analytic = back.grads[e].value;
    double tensor_worst = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double v0 = value[i];
      value[i] = v0 + opt.step;
      const auto up = forward(params);
      value[i] = v0 - opt.step;
      const auto down = forward(params);
      value[i] = v0;
      if (activation_pattern(up) != activation_pattern(down)) {
        ++skipped;
        continue;
      }
      const double num =
          (ctc_loss(up.log_probs, z).loss - ctc_loss(down.log_probs, z).loss) /
          (2 * opt.step);
      const double err = rel_error(analytic[i], num);
      tensor_worst = std::max(tensor_worst, err);
      ++checks;
    }
    if (tensor_worst > worst) {
      worst = tensor_worst;
      worst_where = params[e].name;
    }
  }
  r.checks += checks;
  r.skipped += skipped;
  r.max_error = std::max(r.max_error, worst);
  const double skip_fraction =
      static_cast<double>(skipped) / static_cast<double>(checks + skipped);
  if (skip_fraction > opt.max_skip_fraction) r.passed = false;
  r.details.push_back(label + ": " + std::to_string(checks) +
                      " parameters, " + std::to_string(skipped) +
                      " at kinks, max rel error " + fmt(worst) +
                      (worst_where.empty() ? "" : " (" + worst_where + ")"));
}

}  // namespace

NetworkConfig gradcheck_toy_config() {
  NetworkConfig c;
  c.input_channels = 3;
  c.input_bands = 9;
  c.alphabet_size = 4;
  LayerConfig conv;
  conv.kind = LayerKind::conv;
  conv.width = 4;
  conv.filter_freq = 3;
  conv.filter_time = 5;
  conv.activation = Activation::maxout;
  conv.pieces = 2;
  c.layers.push_back(conv);
  c.layers.push_back(conv);
  LayerConfig dense;
  dense.kind = LayerKind::dense;
  dense.width = 4;
  dense.activation = Activation::linear;
  c.layers.push_back(dense);
  return c;
}

NetworkConfig gradcheck_mixed_config() {
  NetworkConfig c;
  c.input_channels = 3;
  c.input_bands = 9;
  c.alphabet_size = 4;
  LayerConfig l;
  l.kind = LayerKind::conv;
  l.width = 4;
  l.filter_freq = 3;
  l.filter_time = 3;
  l.activation = Activation::relu;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::pool;
  l.pool_size = 3;
  l.pool_step = 3;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::conv;
  l.width = 3;
  l.filter_freq = 3;
  l.filter_time = 3;
  l.freq_padding = Padding::valid;
  l.activation = Activation::prelu;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::dropout;
  l.rate = 0.25;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::dense;
  l.width = 6;
  l.activation = Activation::maxout;
  l.pieces = 3;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::dense;
  l.width = 5;
  l.activation = Activation::prelu;
  c.layers.push_back(l);
  l = {};
  l.kind = LayerKind::dense;
  l.width = 4;
  l.activation = Activation::linear;
  c.layers.push_back(l);
  return c;
}

SuiteResult run_gradcheck(const GradcheckOptions& opt) {
  SuiteResult r;
  r.name = "gradcheck";
  r.passed = true;
  std::mt19937_64 rng(opt.seed);
  check_ctc_logits(opt, rng, r);
  check_network("toy network (2 conv maxout + dense), 3x9x12",
                gradcheck_toy_config(), 12, opt, rng, r);
  check_network("mixed network (relu/pool/prelu/dropout/dense maxout), 3x9x10",
                gradcheck_mixed_config(), 10, opt, rng, r);
  if (r.max_error > opt.tolerance) r.passed = false;
  r.details.push_back("tolerance " + fmt(opt.tolerance) + ", step " +
                      fmt(opt.step) + ", scale floor " +
                      fmt(kGradcheckScaleFloor));
  return r;
}

SuiteResult run_ctc_oracle(const OracleOptions& opt) {
  SuiteResult r;
  r.name = "ctc-oracle";
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> frames_d(1, opt.max_frames);
  std::uniform_int_distribution<std::size_t> alpha_d(2, opt.max_alphabet);
  double worst_ll = 0.0;
  double worst_post = 0.0;
  std::size_t feasible = 0;
  std::size_t infeasible = 0;
  std::size_t infeasible_mismatch = 0;
  while (feasible < opt.instances) {
    const std::size_t frames = frames_d(rng);
    const std::size_t a = alpha_d(rng);
    std::uniform_int_distribution<std::size_t> len_d(
        0, std::min(opt.max_label, frames + 1));
    const LabelSequence z = random_target(rng, len_d(rng), a);
    const auto lp = log_softmax_frames(random_logits(rng, a, frames, 2.0));

    const auto res = ctc_loss(lp, z);
    const double oracle = enumerate_oracle(lp, z);
    if (oracle == 0.0 || !res.feasible) {
      ++infeasible;
      if (res.feasible || oracle != 0.0 || !std::isinf(res.loss)) {
        ++infeasible_mismatch;
      }
      continue;
    }
    ++feasible;
    worst_ll = std::max(worst_ll, std::abs(res.loss - (-std::log(oracle))));

    // Enumerated state occupancy vs. the lattice posterior.
    Tensor<double> occ({a, frames});
    for_each_path(lp, [&](const LatentPath& path, double plp) {
      if (collapse(path, a) != z) return;
      const double p = std::exp(plp);
      for (std::size_t t = 0; t < frames; ++t) occ[path[t] * frames + t] += p;
    });
    const auto post = ctc_grad_log_probs(res.lattice, lp);
    for (std::size_t i = 0; i < occ.size(); ++i) {
      worst_post = std::max(worst_post, std::abs(-post[i] - occ[i] / oracle));
    }
  }
  r.checks = feasible + infeasible;
  r.max_error = std::max(worst_ll, worst_post);
  r.passed = worst_ll <= opt.tolerance && worst_post <= opt.tolerance &&
             infeasible_mismatch == 0;
  r.details.push_back(std::to_string(feasible) +
                      " feasible instances (T<=" +
                      std::to_string(opt.max_frames) + ", A<=" +
                      std::to_string(opt.max_alphabet) + ", L<=" +
                      std::to_string(opt.max_label) +
                      "), max |loss + ln P_enum| " + fmt(worst_ll));
  r.details.push_back("max |posterior - enumerated occupancy| " +
                      fmt(worst_post));
  r.details.push_back(std::to_string(infeasible) +
                      " infeasible instances, " +
                      std::to_string(infeasible_mismatch) +
                      " not reported as +inf");
  return r;
}

SuiteResult run_shapes() {
  SuiteResult r;
  r.name = "shapes";
  r.passed = true;
  const NetworkConfig def = default_network_config();
  def.validate();

  // Geometry of the shipped default: 62 x f out, 13 bands after pooling.
  for (std::size_t f : {1, 7, 100, 313}) {
    const auto geo = infer_geometry(def, f);
    const Shape out = geo.back().output;
    const bool ok = out == Shape{def.alphabet_size, f};
    r.passed = r.passed && ok;
    ++r.checks;
    r.details.push_back("default config, f=" + std::to_string(f) + ": " +
                        shape_string(out) + (ok ? "" : " (expected [62 x f])"));
  }
  {
    // One real forward pass through the full-size stack.
    std::mt19937_64 init(3);
    const auto p = init_uniform<float>(parameter_shapes(def), init);
    Tensor<float> x({def.input_channels, def.input_bands, 7});
    std::normal_distribution<float> n;
    for (auto& v : x.data()) v = n(init);
    const auto pass = network_forward(x, def, p, Mode::inference);
    const bool ok = pass.log_probs.shape() == Shape{def.alphabet_size, 7} &&
                    all_finite(pass.log_probs);
    r.passed = r.passed && ok;
    ++r.checks;
    r.details.push_back("default config forward, f=7: " +
                        shape_string(pass.log_probs.shape()));
  }
  {
    const auto geo = infer_geometry(def, 1);
    const std::size_t bands = geo.at(1).output.at(1);
    ++r.checks;
    if (bands != 13) r.passed = false;
    r.details.push_back("bands after the first pooling layer: " +
                        std::to_string(bands));
  }

  // Every layer keeps the time axis, and the traced forward shapes agree
  // with inference, over a sweep of lengths.
  const NetworkConfig mixed = gradcheck_mixed_config();
  std::mt19937_64 rng(5);
  ParameterSet<double> params;
  {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (const auto& s : parameter_shapes(mixed)) {
      Tensor<double> t(s.shape);
      for (auto& v : t.data()) v = u(rng);
      params.entries.push_back({s.name, s.cls, s.layer, std::move(t)});
    }
  }
  std::size_t mismatches = 0;
  double worst_pad = 0.0;
  for (std::size_t f = 1; f <= 24; ++f) {
    Tensor<double> x({mixed.input_channels, mixed.input_bands, f});
    std::normal_distribution<double> n;
    for (auto& v : x.data()) v = n(rng);
    const auto geo = infer_geometry(mixed, f);
    const auto pass = network_forward(x, mixed, params, Mode::inference);
    for (std::size_t i = 0; i < geo.size(); ++i) {
      ++r.checks;
      if (pass.tapes[i].output_shape != geo[i].output ||
          geo[i].output.back() != f) {
        ++mismatches;
      }
    }
    ++r.checks;
    if (pass.log_probs.shape() != Shape{mixed.alphabet_size, f}) ++mismatches;

    // Padding with junk frames must not change the valid prefix.
    Tensor<double> padded({mixed.input_channels, mixed.input_bands, f + 7});
    for (std::size_t row = 0; row < mixed.input_channels * mixed.input_bands; ++row) {
      for (std::size_t t = 0; t < f + 7; ++t) {
        padded[row * (f + 7) + t] = t < f ? x[row * f + t] : n(rng);
      }
    }
    const auto pp = network_forward(padded, mixed, params, Mode::inference,
                                    nullptr, f);
    const auto prefix = take_frames(pp.log_probs, f);
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      worst_pad = std::max(worst_pad, std::abs(prefix[i] - pass.log_probs[i]));
    }
  }
  r.max_error = worst_pad;
  if (mismatches > 0 || worst_pad > 1e-12) r.passed = false;
  r.details.push_back("length sweep f=1..24: " + std::to_string(mismatches) +
                      " shape mismatches, max padded-vs-unpadded difference " +
                      fmt(worst_pad));
  return r;
}

}  // namespace convctc
