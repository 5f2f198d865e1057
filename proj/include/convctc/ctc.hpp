#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "convctc/tensor.hpp"

namespace convctc {

inline constexpr std::size_t kBlank = 0;
inline constexpr const char* kBlankToken = "<blank>";

/// Output symbol inventory. Index 0 is always the blank.
class Alphabet {
 public:
  Alphabet() = default;
  /// `symbols` excludes the blank; it is inserted at index 0.
  explicit Alphabet(const std::vector<std::string>& symbols);

  /// `all` includes "<blank>" first, as returned by symbols().
  static Alphabet from_symbols(const std::vector<std::string>& all);
  /// One symbol per line, first line the literal "<blank>".
  static Alphabet load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(std::size_t index) const;
  /// Throws std::out_of_range for unknown symbols.
  std::size_t index(const std::string& symbol) const;
  bool contains(const std::string& symbol) const;
  /// All symbols including "<blank>" at index 0.
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const Alphabet& other) const {
    return symbols_ == other.symbols_;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> index_;
};

using LabelSequence = std::vector<std::size_t>;
using LatentPath = std::vector<std::size_t>;

/// Merge runs of identical labels, then drop blanks.
LabelSequence collapse(const LatentPath& path, std::size_t alphabet_size);

/// Blank-interleaved target (-, z1, -, z2, ..., zL, -).
std::vector<std::size_t> augment_target(const LabelSequence& target);

/// Shortest input that can emit `target`: L plus one blank between every
/// pair of equal neighbours.
std::size_t min_frames_for(const LabelSequence& target);

template <typename T>
struct CtcLattice {
  std::vector<std::size_t> states;  // augmented target, length 2L+1
  std::size_t frames = 0;
  Tensor<T> alpha;  // [2L+1 x T], log domain
  Tensor<T> beta;   // [2L+1 x T], log domain, excludes the emission at t
  T log_likelihood = -std::numeric_limits<T>::infinity();
  bool feasible = false;
};

template <typename T>
struct CtcResult {
  T loss = std::numeric_limits<T>::infinity();  // -ln Pr(Z|X)
  bool feasible = false;
  CtcLattice<T> lattice;
};

/// log_probs: [A x T] per-frame log-distributions. Infeasible targets yield
/// loss +inf with feasible == false rather than NaN.
template <typename T>
CtcResult<T> ctc_loss(const Tensor<T>& log_probs, const LabelSequence& target);

/// Gradient of the loss w.r.t. the pre-softmax logits: y - posterior.
template <typename T>
Tensor<T> ctc_grad(const CtcLattice<T>& lattice, const Tensor<T>& log_probs);

/// Gradient of the loss w.r.t. the log-probabilities themselves: -posterior.
template <typename T>
Tensor<T> ctc_grad_log_probs(const CtcLattice<T>& lattice,
                             const Tensor<T>& log_probs);

/// Per-frame argmax (lowest index on ties) followed by collapse.
template <typename T>
LabelSequence best_path_decode(const Tensor<T>& log_probs);

/// Pr(Z|X) by summing over every one of the A^T latent paths. Rejects
/// inputs with more than 10^6 paths.
template <typename T>
T enumerate_oracle(const Tensor<T>& log_probs, const LabelSequence& target);

inline constexpr std::size_t kOracleMaxPaths = 1'000'000;

/// Calls `visit(path, log_prob)` for every latent path of a [A x T] input.
template <typename T, typename Visit>
void for_each_path(const Tensor<T>& log_probs, Visit&& visit);

std::string join_symbols(const LabelSequence& labels, const Alphabet& alphabet);

// ---------------------------------------------------------------------------

template <typename T, typename Visit>
void for_each_path(const Tensor<T>& log_probs, Visit&& visit) {
  if (log_probs.rank() != 2) {
    throw ShapeError("expected [symbols x frames], got " +
                     shape_string(log_probs.shape()));
  }
  const std::size_t a = log_probs.extent(0);
  const std::size_t frames = log_probs.extent(1);
  double paths = 1;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(a);
  if (paths > static_cast<double>(kOracleMaxPaths)) {
    throw std::invalid_argument("enumeration over " + std::to_string(paths) +
                                " paths exceeds the oracle guard");
  }
  LatentPath path(frames, 0);
  while (true) {
    T lp = 0;
    for (std::size_t t = 0; t < frames; ++t) lp += log_probs[path[t] * frames + t];
    visit(static_cast<const LatentPath&>(path), lp);
    std::size_t t = 0;
    while (t < frames && ++path[t] == a) path[t++] = 0;
    if (t == frames) break;
  }
}

}  // namespace convctc
