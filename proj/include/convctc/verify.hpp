#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "convctc/network.hpp"

namespace convctc {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t checks = 0;
  std::size_t skipped = 0;
  double max_error = 0.0;
  std::vector<std::string> details;  // one line per sub-check
};

void print_suite(std::ostream& os, const SuiteResult& r);

// Finite differences compare |a - n| / max(|a|, |n|, kGradcheckScaleFloor):
// components smaller than the floor are held to an absolute error of
// tolerance * floor instead, which keeps round-off in f(x +- h) from
// dominating near-zero gradients.
inline constexpr double kGradcheckScaleFloor = 1e-4;

struct GradcheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  std::size_t ctc_instances = 40;
  // Coordinates whose finite difference straddles a kink (maxout winner,
  // ReLU sign or pooling argmax changes between x - h and x + h) are skipped;
  // the suite fails if more than this fraction is skipped.
  double max_skip_fraction = 0.05;
  const BackwardHooks<double>* hooks = nullptr;
};

/// Toy network from the gradient-check criterion: two maxout conv layers
/// and a linear dense projection, input 3 x 9 x 12, 4 output symbols.
NetworkConfig gradcheck_toy_config();
/// A second toy stack exercising relu/prelu, pooling, dropout, valid
/// padding and dense maxout.
NetworkConfig gradcheck_mixed_config();

/// CTC gradient w.r.t. logits and every parameter of the toy networks,
/// 64-bit, central differences.
SuiteResult run_gradcheck(const GradcheckOptions& options = {});

struct OracleOptions {
  std::size_t instances = 1000;
  std::uint64_t seed = 11;
  double tolerance = 1e-9;
  std::size_t max_frames = 8;
  std::size_t max_alphabet = 3;  // including blank
  std::size_t max_label = 4;
};

/// ctc_loss vs. -ln of the brute-force path sum on random small instances;
/// also compares the posterior behind ctc_grad with enumerated occupancies.
SuiteResult run_ctc_oracle(const OracleOptions& options = {});

/// Output geometry of the default config over several lengths, plus the
/// padded-vs-unpadded equivalence of the forward pass.
SuiteResult run_shapes();

}  // namespace convctc
