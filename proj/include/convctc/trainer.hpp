#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "convctc/checkpoint.hpp"
#include "convctc/data.hpp"
#include "json.hpp"

namespace convctc {

/// Training hyperparameters. Unset optionals fall back to the stage
/// defaults (Adam lr 1e-4 without L2; SGD lr 1e-5 with L2 1e-5) or, for
/// dropout, to the rates in the network config.
struct TrainSettings {
  std::uint64_t seed = 1;
  Stage stage = Stage::adam;
  std::optional<double> lr;
  std::optional<double> l2;
  std::size_t batch = 20;
  std::optional<double> dropout;
  std::size_t patience = 5;  // evaluations without improvement
  std::size_t max_epochs = 100;
  bool auto_finetune = false;  // on Adam plateau, continue with SGD from best
  std::optional<double> finetune_lr;
  std::optional<double> finetune_l2;
  bool batch_mean = false;  // average instead of sum per-utterance losses
  double clip_norm = 0.0;
  bool log_seconds = true;  // false writes 0 so logs compare byte-for-byte
  BatchOrder order = BatchOrder::shuffled;
  std::size_t eval_every = 1;
  std::optional<double> stop_at_ler;  // stop once dev LER <= this

  OptimizerConfig optimizer_config() const;
  OptimizerConfig finetune_config() const;

  /// Fields present in `j` override `base`. Unknown keys are rejected.
  static TrainSettings from_json(const nlohmann::json& j,
                                 TrainSettings base);
  nlohmann::ordered_json to_json() const;
};

std::string to_string(BatchOrder order);
BatchOrder parse_batch_order(const std::string& text);

struct TrainPaths {
  std::filesystem::path checkpoint;  // best on dev; "<checkpoint>.last" = latest
  std::filesystem::path metrics;     // appended, one JSON object per epoch
};

std::filesystem::path last_checkpoint_path(const std::filesystem::path& best);

struct EpochRecord {
  std::size_t epoch = 0;
  Stage stage = Stage::adam;
  double train_loss = 0.0;  // mean CTC loss per trained utterance
  std::optional<double> dev_ler;
  double seconds = 0.0;
  std::size_t skipped = 0;  // infeasible utterances
  std::string line;         // exactly as appended to the metrics log
};

struct TrainSummary {
  std::vector<EpochRecord> epochs;
  std::optional<double> best_dev_ler;
  std::size_t best_epoch = 0;
  bool switched_to_sgd = false;
  std::string stop_reason;
};

/// New run: uniform init from the seed, fresh optimizer for settings.stage,
/// dropout override applied to the config.
template <typename T>
TrainingState<T> fresh_state(NetworkConfig config, const Alphabet& alphabet,
                             NormalizationStats<T> stats,
                             const TrainSettings& settings);

/// Starts a new stage from the parameters (and stats) of an existing
/// checkpoint: fresh optimizer, fresh progress.
template <typename T>
TrainingState<T> state_from_init(const TrainingState<T>& source,
                                 const TrainSettings& settings);

struct BatchLoss {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Summed (or averaged) gradient of one batch, utterances processed in
/// batch order at their true lengths.
template <typename T>
BatchLoss batch_gradient(const NetworkConfig& config,
                         const ParameterSet<T>& params, const Batch<T>& batch,
                         std::mt19937_64& dropout_rng, bool batch_mean,
                         ParameterSet<T>& grads);

/// Runs epochs from state.progress.epoch + 1 up to settings.max_epochs,
/// evaluating dev LER, writing checkpoints and metrics lines.
template <typename T>
TrainSummary train(TrainingState<T>& state, const Dataset<T>& train_set,
                   const Dataset<T>& dev_set, const TrainSettings& settings,
                   const TrainPaths& paths, std::ostream* log = nullptr);

/// One metrics-log line (no trailing newline).
std::string metrics_line(const EpochRecord& r);

}  // namespace convctc
