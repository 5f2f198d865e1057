// Brute-force reference for the CTC sequence probability. Shares nothing with
// the forward-backward code beyond the collapse map itself.

#include "convctc/ctc.hpp"

namespace convctc {

template <typename T>
T enumerate_oracle(const Tensor<T>& log_probs, const LabelSequence& target) {
  const std::size_t a = log_probs.rank() == 2 ? log_probs.extent(0) : 0;
  for (std::size_t z : target) {
    if (z == kBlank || z >= a) {
      throw std::out_of_range("target label " + std::to_string(z) +
                              " outside the alphabet");
    }
  }
  T total = 0;
  for_each_path(log_probs, [&](const LatentPath& path, T lp) {
    if (collapse(path, a) == target) total += std::exp(lp);
  });
  return total;
}

template float enumerate_oracle<float>(const Tensor<float>&,
                                       const LabelSequence&);
template double enumerate_oracle<double>(const Tensor<double>&,
                                         const LabelSequence&);

}  // namespace convctc
