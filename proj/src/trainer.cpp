#include "convctc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "convctc/scoring.hpp"
#include "convctc/tensor_io.hpp"

namespace convctc {

std::string to_string(BatchOrder order) {
  switch (order) {
    case BatchOrder::as_listed: return "as_listed";
    case BatchOrder::shuffled: return "shuffled";
    case BatchOrder::length_sorted: return "length_sorted";
  }
  return "?";
}

BatchOrder parse_batch_order(const std::string& text) {
  if (text == "as_listed") return BatchOrder::as_listed;
  if (text == "shuffled") return BatchOrder::shuffled;
  if (text == "length_sorted") return BatchOrder::length_sorted;
  throw std::invalid_argument("unknown batch order '" + text +
                              "' (as_listed|shuffled|length_sorted)");
}

OptimizerConfig TrainSettings::optimizer_config() const {
  OptimizerConfig c = stage_defaults(stage);
  if (lr) c.lr = *lr;
  if (l2) c.l2 = *l2;
  c.clip_norm = clip_norm;
  return c;
}

OptimizerConfig TrainSettings::finetune_config() const {
  OptimizerConfig c = stage_defaults(Stage::sgd);
  if (finetune_lr) c.lr = *finetune_lr;
  if (finetune_l2) c.l2 = *finetune_l2;
  c.clip_norm = clip_norm;
  return c;
}

namespace {

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, std::optional<V>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<V>();
  }
}

template <typename V>
nlohmann::ordered_json opt_json(const std::optional<V>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

TrainSettings TrainSettings::from_json(const nlohmann::json& j,
                                       TrainSettings s) {
  static const char* const kKeys[] = {
      "seed",        "stage",       "lr",           "l2",
      "batch",       "dropout",     "patience",     "max_epochs",
      "auto_finetune", "finetune_lr", "finetune_l2", "batch_mean",
      "clip_norm",   "log_seconds", "order",        "eval_every",
      "stop_at_ler"};
  if (!j.is_object()) throw std::invalid_argument("training settings must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw std::invalid_argument("unknown training setting '" + key + "'");
    }
  }
  try {
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("stage")) s.stage = parse_stage(j.at("stage").get<std::string>());
    read_opt(j, "lr", s.lr);
    read_opt(j, "l2", s.l2);
    if (j.contains("batch")) s.batch = j.at("batch").get<std::size_t>();
    read_opt(j, "dropout", s.dropout);
    if (j.contains("patience")) s.patience = j.at("patience").get<std::size_t>();
    if (j.contains("max_epochs")) s.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("auto_finetune")) s.auto_finetune = j.at("auto_finetune").get<bool>();
    read_opt(j, "finetune_lr", s.finetune_lr);
    read_opt(j, "finetune_l2", s.finetune_l2);
    if (j.contains("batch_mean")) s.batch_mean = j.at("batch_mean").get<bool>();
    if (j.contains("clip_norm")) s.clip_norm = j.at("clip_norm").get<double>();
    if (j.contains("log_seconds")) s.log_seconds = j.at("log_seconds").get<bool>();
    if (j.contains("order")) s.order = parse_batch_order(j.at("order").get<std::string>());
    if (j.contains("eval_every")) s.eval_every = j.at("eval_every").get<std::size_t>();
    read_opt(j, "stop_at_ler", s.stop_at_ler);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("training settings: ") + e.what());
  }
  if (s.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (s.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (s.dropout && (*s.dropout < 0.0 || *s.dropout >= 1.0)) {
    throw std::invalid_argument("dropout must be in [0, 1)");
  }
  return s;
}

nlohmann::ordered_json TrainSettings::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["stage"] = to_string(stage);
  j["lr"] = opt_json(lr);
  j["l2"] = opt_json(l2);
  j["batch"] = batch;
  j["dropout"] = opt_json(dropout);
  j["patience"] = patience;
  j["max_epochs"] = max_epochs;
  j["auto_finetune"] = auto_finetune;
  j["finetune_lr"] = opt_json(finetune_lr);
  j["finetune_l2"] = opt_json(finetune_l2);
  j["batch_mean"] = batch_mean;
  j["clip_norm"] = clip_norm;
  j["log_seconds"] = log_seconds;
  j["order"] = to_string(order);
  j["eval_every"] = eval_every;
  j["stop_at_ler"] = opt_json(stop_at_ler);
  return j;
}

std::filesystem::path last_checkpoint_path(const std::filesystem::path& best) {
  return std::filesystem::path(best.string() + ".last");
}

std::string metrics_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["stage"] = to_string(r.stage);
  j["train_loss"] = r.train_loss;
  j["dev_ler"] = r.dev_ler ? nlohmann::ordered_json(*r.dev_ler)
                           : nlohmann::ordered_json(nullptr);
  j["seconds"] = r.seconds;
  return j.dump();
}

namespace {

// Independent streams per purpose, all derived from the run seed.
std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kInitStream = 0;
constexpr std::uint32_t kShuffleStream = 1;
constexpr std::uint32_t kDropoutStream = 2;

}  // namespace

template <typename T>
TrainingState<T> fresh_state(NetworkConfig config, const Alphabet& alphabet,
                             NormalizationStats<T> stats,
                             const TrainSettings& settings) {
  if (settings.dropout) config.set_dropout(*settings.dropout);
  config.validate();
  if (alphabet.size() != config.alphabet_size) {
    throw std::invalid_argument(
        "alphabet has " + std::to_string(alphabet.size()) +
        " symbols (with blank) but the network emits " +
        std::to_string(config.alphabet_size));
  }
  if (stats.bands() != config.input_bands) {
    throw ShapeError("normalization stats cover " +
                     std::to_string(stats.bands()) + " bands, network expects " +
                     std::to_string(config.input_bands));
  }
  TrainingState<T> s;
  auto init_rng = seeded_stream(settings.seed, kInitStream);
  s.params = init_uniform<T>(parameter_shapes(config), init_rng);
  s.config = std::move(config);
  s.alphabet = alphabet;
  s.stats = std::move(stats);
  s.optimizer = OptimizerState<T>::fresh(settings.optimizer_config(), s.params);
  s.progress.shuffle_rng = rng_state(seeded_stream(settings.seed, kShuffleStream));
  s.progress.dropout_rng = rng_state(seeded_stream(settings.seed, kDropoutStream));
  s.progress.settings = settings.to_json();
  return s;
}

template <typename T>
TrainingState<T> state_from_init(const TrainingState<T>& source,
                                 const TrainSettings& settings) {
  TrainingState<T> s;
  s.config = source.config;
  if (settings.dropout) s.config.set_dropout(*settings.dropout);
  s.alphabet = source.alphabet;
  s.stats = source.stats;
  s.params = source.params;
  s.optimizer = OptimizerState<T>::fresh(settings.optimizer_config(), s.params);
  s.progress.shuffle_rng = rng_state(seeded_stream(settings.seed, kShuffleStream));
  s.progress.dropout_rng = rng_state(seeded_stream(settings.seed, kDropoutStream));
  s.progress.settings = settings.to_json();
  return s;
}

template <typename T>
BatchLoss batch_gradient(const NetworkConfig& config,
                         const ParameterSet<T>& params, const Batch<T>& batch,
                         std::mt19937_64& dropout_rng, bool batch_mean,
                         ParameterSet<T>& grads) {
  grads = params.zeros_like();
  BatchLoss out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor<T> x = batch.item(i);
    const auto pass =
        network_forward(x, config, params, Mode::training, &dropout_rng);
    const auto res = ctc_loss(pass.log_probs, batch.targets[i]);
    if (!res.feasible) {
      ++out.skipped;
      continue;
    }
    if (!std::isfinite(static_cast<double>(res.loss))) {
      throw std::runtime_error("non-finite CTC loss on utterance '" +
                               batch.ids[i] + "'");
    }
    const Tensor<T> g = ctc_grad(res.lattice, pass.log_probs);
    auto back = network_backward_logits(pass, config, params, g);
    grads.accumulate(back.grads);
    out.loss += static_cast<double>(res.loss);
    ++out.used;
  }
  if (batch_mean && out.used > 1) grads.scale(T(1) / static_cast<T>(out.used));
  return out;
}

template <typename T>
TrainSummary train(TrainingState<T>& state, const Dataset<T>& train_set,
                   const Dataset<T>& dev_set, const TrainSettings& settings,
                   const TrainPaths& paths, std::ostream* log) {
  if (train_set.size() == 0) throw std::invalid_argument("empty training set");
  if (dev_set.size() == 0) throw std::invalid_argument("empty dev set");
  if (paths.checkpoint.empty()) {
    throw std::invalid_argument("training needs a checkpoint path");
  }
  check_parameters(state.config, state.params);
  state.progress.settings = settings.to_json();

  std::ofstream metrics;
  if (!paths.metrics.empty()) {
    metrics.open(paths.metrics, std::ios::app);
    if (!metrics) throw FormatError("cannot append to " + paths.metrics.string());
  }
  auto shuffle_rng = rng_from_state(state.progress.shuffle_rng);
  auto dropout_rng = rng_from_state(state.progress.dropout_rng);
  const auto last_path = last_checkpoint_path(paths.checkpoint);

  TrainSummary summary;
  summary.best_dev_ler = state.progress.best_dev_ler;
  summary.best_epoch = state.progress.best_epoch;
  using clock = std::chrono::steady_clock;

  while (state.progress.epoch < settings.max_epochs) {
    const std::size_t epoch = state.progress.epoch + 1;
    const auto start = clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = state.optimizer.config.stage;

    auto batches = make_batches(train_set, settings.batch, shuffle_rng, settings.order);
    double loss_sum = 0.0;
    std::size_t used = 0;
    ParameterSet<T> grads;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchLoss bl;
      try {
        bl = batch_gradient(state.config, state.params, batches[b], dropout_rng,
                            settings.batch_mean, grads);
      } catch (const std::runtime_error& e) {
        std::string ids;
        for (const auto& id : batches[b].ids) ids += (ids.empty() ? "" : ",") + id;
        throw std::runtime_error("epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(b) + " [" + ids + "]: " + e.what());
      }
      rec.skipped += bl.skipped;
      if (bl.used == 0) continue;
      loss_sum += bl.loss;
      used += bl.used;
      optimizer_step(state.params, grads, state.optimizer);
    }
    rec.train_loss = used > 0 ? loss_sum / static_cast<double>(used) : 0.0;
    if (rec.skipped > 0 && log) {
      *log << "warning: epoch " << epoch << " skipped " << rec.skipped
           << " infeasible utterance(s)\n";
    }

    bool improved = false;
    if (epoch % settings.eval_every == 0 || epoch == settings.max_epochs) {
      const auto report = evaluate(state.config, state.params, state.alphabet, dev_set);
      rec.dev_ler = report.error_rate();
      if (!state.progress.best_dev_ler || *rec.dev_ler < *state.progress.best_dev_ler) {
        state.progress.best_dev_ler = rec.dev_ler;
        state.progress.best_epoch = epoch;
        state.progress.evals_since_best = 0;
        improved = true;
      } else {
        ++state.progress.evals_since_best;
      }
    }
    rec.seconds = settings.log_seconds
                      ? std::chrono::duration<double>(clock::now() - start).count()
                      : 0.0;

    state.progress.epoch = epoch;
    state.progress.shuffle_rng = rng_state(shuffle_rng);
    state.progress.dropout_rng = rng_state(dropout_rng);
    if (improved) save_checkpoint(paths.checkpoint, state);

    rec.line = metrics_line(rec);
    if (metrics.is_open()) {
      metrics << rec.line << '\n';
      metrics.flush();
    }
    if (log) *log << rec.line << '\n';
    summary.epochs.push_back(rec);

    bool stop = false;
    if (settings.stop_at_ler && rec.dev_ler && *rec.dev_ler <= *settings.stop_at_ler) {
      summary.stop_reason = "target dev LER reached";
      stop = true;
    } else if (state.progress.evals_since_best >= settings.patience) {
      if (state.optimizer.config.stage == Stage::adam && settings.auto_finetune) {
        // Continue from the best Adam parameters with the fine-tune stage.
        state.params = load_checkpoint<T>(paths.checkpoint).params;
        state.optimizer =
            OptimizerState<T>::fresh(settings.finetune_config(), state.params);
        state.progress.evals_since_best = 0;
        summary.switched_to_sgd = true;
        if (log) *log << "plateau: switching to sgd at epoch " << epoch << '\n';
      } else {
        summary.stop_reason = "dev LER plateau";
        stop = true;
      }
    }
    save_checkpoint(last_path, state);
    if (stop) break;
  }
  if (summary.stop_reason.empty()) summary.stop_reason = "max epochs";
  summary.best_dev_ler = state.progress.best_dev_ler;
  summary.best_epoch = state.progress.best_epoch;
  return summary;
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template TrainingState<T> fresh_state<T>(NetworkConfig, const Alphabet&,     \
                                           NormalizationStats<T>,              \
                                           const TrainSettings&);              \
  template TrainingState<T> state_from_init<T>(const TrainingState<T>&,        \
                                               const TrainSettings&);          \
  template BatchLoss batch_gradient<T>(const NetworkConfig&,                   \
                                       const ParameterSet<T>&,                 \
                                       const Batch<T>&, std::mt19937_64&,      \
                                       bool, ParameterSet<T>&);                \
  template TrainSummary train<T>(TrainingState<T>&, const Dataset<T>&,         \
                                 const Dataset<T>&, const TrainSettings&,      \
                                 const TrainPaths&, std::ostream*);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
