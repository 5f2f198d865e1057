#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "convctc/ctc.hpp"
#include "convctc/features.hpp"
#include "convctc/network.hpp"
#include "convctc/optim.hpp"
#include "json.hpp"

namespace convctc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingProgress {
  std::size_t epoch = 0;  // completed epochs
  std::optional<double> best_dev_ler;
  std::size_t best_epoch = 0;
  std::size_t evals_since_best = 0;
  std::string shuffle_rng;  // std::mt19937_64 stream state
  std::string dropout_rng;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
};

template <typename T>
struct TrainingState {
  NetworkConfig config;
  Alphabet alphabet;
  NormalizationStats<T> stats;
  ParameterSet<T> params;
  OptimizerState<T> optimizer;
  TrainingProgress progress;
};

/// Layout: "CVCK", u32 version, u32 dtype, u64 header length, header JSON
/// (config, alphabet, optimizer scalars, progress), u32 tensor count, then
/// per tensor a u32-length-prefixed name and a tensor record. Tensor names:
/// param/<name>, adam_m/<name>, adam_v/<name>, stats/mean, stats/std.
template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const TrainingState<T>& state);

/// Scalars are converted when the file was written at another precision.
/// Throws FormatError / ShapeError on any inconsistency.
template <typename T>
TrainingState<T> load_checkpoint(const std::filesystem::path& path);

/// Reads the header's dtype tag (4 or 8) without loading tensors.
std::uint32_t checkpoint_dtype(const std::filesystem::path& path);

std::string rng_state(const std::mt19937_64& rng);
std::mt19937_64 rng_from_state(const std::string& state);

}  // namespace convctc
