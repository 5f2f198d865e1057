#include "convctc/ctc.hpp"

#include <fstream>
#include <sstream>

#include "convctc/tensor_io.hpp"

namespace convctc {

// ---------------------------------------------------------------------------
// Alphabet

Alphabet::Alphabet(const std::vector<std::string>& symbols) {
  symbols_.reserve(symbols.size() + 1);
  symbols_.push_back(kBlankToken);
  index_[kBlankToken] = kBlank;
  for (const auto& s : symbols) {
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
      throw std::invalid_argument("invalid symbol '" + s + "'");
    }
    if (!index_.emplace(s, symbols_.size()).second) {
      throw std::invalid_argument("duplicate symbol '" + s + "'");
    }
    symbols_.push_back(s);
  }
  if (symbols_.size() < 2) {
    throw std::invalid_argument("an alphabet needs at least one non-blank symbol");
  }
}

Alphabet Alphabet::from_symbols(const std::vector<std::string>& all) {
  if (all.empty() || all.front() != kBlankToken) {
    throw std::invalid_argument(std::string("symbol list must start with ") +
                                kBlankToken);
  }
  return Alphabet(std::vector<std::string>(all.begin() + 1, all.end()));
}

Alphabet Alphabet::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open alphabet " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  if (lines.empty() || lines.front() != kBlankToken) {
    throw FormatError(path.string() + ": first line must be " + kBlankToken);
  }
  try {
    return Alphabet(std::vector<std::string>(lines.begin() + 1, lines.end()));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void Alphabet::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write alphabet " + path.string());
  for (const auto& s : symbols_) os << s << '\n';
}

const std::string& Alphabet::symbol(std::size_t index) const {
  if (index >= symbols_.size()) {
    throw std::out_of_range("symbol index " + std::to_string(index) +
                            " outside alphabet of size " +
                            std::to_string(symbols_.size()));
  }
  return symbols_[index];
}

std::size_t Alphabet::index(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) {
    throw std::out_of_range("unknown symbol '" + symbol + "'");
  }
  return it->second;
}

bool Alphabet::contains(const std::string& symbol) const {
  return index_.count(symbol) != 0;
}

std::string join_symbols(const LabelSequence& labels,
                         const Alphabet& alphabet) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ' ';
    out += alphabet.symbol(labels[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collapse

LabelSequence collapse(const LatentPath& path, std::size_t alphabet_size) {
  LabelSequence out;
  std::size_t prev = kBlank;
  for (std::size_t s : path) {
    if (s >= alphabet_size) {
      throw std::out_of_range("path symbol " + std::to_string(s) +
                              " outside alphabet of size " +
                              std::to_string(alphabet_size));
    }
    if (s != kBlank && s != prev) out.push_back(s);
    prev = s;
  }
  return out;
}

std::vector<std::size_t> augment_target(const LabelSequence& target) {
  std::vector<std::size_t> states(2 * target.size() + 1, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) states[2 * i + 1] = target[i];
  return states;
}

std::size_t min_frames_for(const LabelSequence& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Forward-backward

namespace {

template <typename T>
void check_inputs(const Tensor<T>& log_probs, const LabelSequence& target) {
  if (log_probs.rank() != 2) {
    throw ShapeError("ctc expects [symbols x frames], got " +
                     shape_string(log_probs.shape()));
  }
  const std::size_t a = log_probs.extent(0);
  if (a < 2) throw ShapeError("ctc needs at least blank plus one symbol");
  for (std::size_t z : target) {
    if (z == kBlank || z >= a) {
      throw std::out_of_range("target label " + std::to_string(z) +
                              " outside [1, " + std::to_string(a - 1) + "]");
    }
  }
}

}  // namespace

template <typename T>
CtcResult<T> ctc_loss(const Tensor<T>& log_probs,
                      const LabelSequence& target) {
  check_inputs(log_probs, target);
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();
  const std::size_t frames = log_probs.extent(1);

  CtcResult<T> res;
  auto& lat = res.lattice;
  lat.states = augment_target(target);
  lat.frames = frames;
  const std::size_t n = lat.states.size();
  if (frames < min_frames_for(target)) return res;  // infeasible

  lat.alpha = Tensor<T>({n, frames}, kNegInf);
  lat.beta = Tensor<T>({n, frames}, kNegInf);
  const auto& z = lat.states;
  auto lp = [&](std::size_t s, std::size_t t) {
    return log_probs[z[s] * frames + t];
  };
  // A skip from s-2 to s is allowed into a label that differs from the
  // label two states back.
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && z[s] != kBlank && z[s] != z[s - 2];
  };

  T* alpha = lat.alpha.raw();
  alpha[0] = lp(0, 0);
  if (n > 1) alpha[1 * frames] = lp(1, 0);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      const T stay = alpha[s * frames + t - 1];
      const T step = s >= 1 ? alpha[(s - 1) * frames + t - 1] : kNegInf;
      const T skip = can_skip(s) ? alpha[(s - 2) * frames + t - 1] : kNegInf;
      const T acc = reduce_logsumexp({stay, step, skip});
      alpha[s * frames + t] = acc == kNegInf ? kNegInf : acc + lp(s, t);
    }
  }

  T* beta = lat.beta.raw();
  beta[(n - 1) * frames + frames - 1] = 0;
  if (n > 1) beta[(n - 2) * frames + frames - 1] = 0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < n; ++s) {
      const T stay = beta[s * frames + t + 1] + lp(s, t + 1);
      const T step =
          s + 1 < n ? beta[(s + 1) * frames + t + 1] + lp(s + 1, t + 1) : kNegInf;
      const T skip = s + 2 < n && can_skip(s + 2)
                         ? beta[(s + 2) * frames + t + 1] + lp(s + 2, t + 1)
                         : kNegInf;
      beta[s * frames + t] = reduce_logsumexp({stay, step, skip});
    }
  }

  const T end_blank = alpha[(n - 1) * frames + frames - 1];
  const T end_label = n > 1 ? alpha[(n - 2) * frames + frames - 1] : kNegInf;
  lat.log_likelihood = reduce_logsumexp({end_blank, end_label});
  lat.feasible = lat.log_likelihood > kNegInf;
  res.feasible = lat.feasible;
  res.loss = lat.feasible ? -lat.log_likelihood
                          : std::numeric_limits<T>::infinity();
  return res;
}

template <typename T>
Tensor<T> ctc_grad_log_probs(const CtcLattice<T>& lattice,
                             const Tensor<T>& log_probs) {
  if (!lattice.feasible) {
    throw std::invalid_argument("no gradient for an infeasible CTC target");
  }
  if (log_probs.rank() != 2 || log_probs.extent(1) != lattice.frames) {
    throw ShapeError("log_probs " + shape_string(log_probs.shape()) +
                     " do not match the lattice");
  }
  const std::size_t a = log_probs.extent(0);
  const std::size_t frames = lattice.frames;
  const std::size_t n = lattice.states.size();
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();
  // Posterior occupancy per symbol, accumulated over states in ascending
  // order in the log domain.
  Tensor<T> post({a, frames}, kNegInf);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      const T v = lattice.alpha[s * frames + t] + lattice.beta[s * frames + t];
      T& slot = post[lattice.states[s] * frames + t];
      slot = reduce_logsumexp({slot, v});
    }
  }
  Tensor<T> g({a, frames});
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = -std::exp(post[i] - lattice.log_likelihood);
  }
  return g;
}

template <typename T>
Tensor<T> ctc_grad(const CtcLattice<T>& lattice, const Tensor<T>& log_probs) {
  Tensor<T> g = ctc_grad_log_probs(lattice, log_probs);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += std::exp(log_probs[i]);
  return g;
}

template <typename T>
LabelSequence best_path_decode(const Tensor<T>& log_probs) {
  if (log_probs.rank() != 2) {
    throw ShapeError("decoder expects [symbols x frames], got " +
                     shape_string(log_probs.shape()));
  }
  const std::size_t a = log_probs.extent(0);
  const std::size_t frames = log_probs.extent(1);
  LatentPath path(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < a; ++k) {
      if (log_probs[k * frames + t] > log_probs[best * frames + t]) best = k;
    }
    path[t] = best;
  }
  return collapse(path, a);
}

#define CONVCTC_INSTANTIATE(T)                                               \
  template CtcResult<T> ctc_loss<T>(const Tensor<T>&, const LabelSequence&); \
  template Tensor<T> ctc_grad<T>(const CtcLattice<T>&, const Tensor<T>&);    \
  template Tensor<T> ctc_grad_log_probs<T>(const CtcLattice<T>&,            \
                                           const Tensor<T>&);               \
  template LabelSequence best_path_decode<T>(const Tensor<T>&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
