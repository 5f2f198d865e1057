// convctc: train, evaluate and inspect convolutional CTC models.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "convctc/checkpoint.hpp"
#include "convctc/config_json.hpp"
#include "convctc/data.hpp"
#include "convctc/scoring.hpp"
#include "convctc/tensor_io.hpp"
#include "convctc/trainer.hpp"
#include "convctc/verify.hpp"

namespace fs = std::filesystem;
using namespace convctc;

namespace {

// Flags that mirror TrainSettings fields. Only flags actually given on the
// command line override the config file's "training" section.
struct TrainFlags {
  std::uint64_t seed = 1;
  std::string stage;
  double lr = 0;
  double l2 = 0;
  std::size_t batch = 0;
  double dropout = 0;
  std::size_t patience = 0;
  std::size_t max_epochs = 0;
  bool auto_finetune = false;
  double finetune_lr = 0;
  double finetune_l2 = 0;
  bool batch_mean = false;
  double clip_norm = 0;
  bool no_timing = false;
  std::string order;
  std::size_t eval_every = 0;
  double stop_at_ler = 0;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    opts["seed"] = app->add_option("--seed", seed, "RNG seed (default 1)");
    opts["stage"] = app->add_option("--stage", stage, "Optimizer stage")
                        ->check(CLI::IsMember({"adam", "sgd"}));
    opts["lr"] = app->add_option("--lr", lr,
                                 "Learning rate (default 1e-4 adam, 1e-5 sgd)");
    opts["l2"] = app->add_option("--l2", l2,
                                 "L2 penalty on weights (default 1e-5 sgd, 0 adam)");
    opts["batch"] = app->add_option("--batch", batch, "Batch size (default 20)");
    opts["dropout"] = app->add_option(
        "--dropout", dropout, "Dropout rate for every dropout layer (default: config, 0.3)");
    opts["patience"] = app->add_option(
        "--patience", patience, "Evaluations without dev improvement (default 5)");
    opts["max_epochs"] = app->add_option("--epochs", max_epochs,
                                         "Stop after this many epochs (default 100)");
    opts["auto_finetune"] = app->add_flag(
        "--auto-finetune", auto_finetune,
        "On an Adam plateau, continue from the best checkpoint with SGD");
    opts["finetune_lr"] = app->add_option("--finetune-lr", finetune_lr,
                                          "SGD learning rate after the switch");
    opts["finetune_l2"] = app->add_option("--finetune-l2", finetune_l2,
                                          "SGD L2 penalty after the switch");
    opts["batch_mean"] = app->add_flag("--batch-mean", batch_mean,
                                       "Average per-utterance losses in a batch");
    opts["clip_norm"] = app->add_option("--clip-norm", clip_norm,
                                        "Global gradient-norm clip (0 = off)");
    opts["log_seconds"] = app->add_flag(
        "--no-timing", no_timing, "Log 0 seconds so reruns compare byte-for-byte");
    opts["order"] = app->add_option("--order", order, "Batch order")
                        ->check(CLI::IsMember({"shuffled", "as_listed", "length_sorted"}));
    opts["eval_every"] = app->add_option("--eval-every", eval_every,
                                         "Evaluate dev every N epochs (default 1)");
    opts["stop_at_ler"] = app->add_option("--stop-at-ler", stop_at_ler,
                                          "Stop once dev LER is at or below this");
  }

  bool given(const std::string& key) const { return opts.at(key)->count() > 0; }

  nlohmann::json overrides() const {
    nlohmann::json j = nlohmann::json::object();
    if (given("seed")) j["seed"] = seed;
    if (given("stage")) j["stage"] = stage;
    if (given("lr")) j["lr"] = lr;
    if (given("l2")) j["l2"] = l2;
    if (given("batch")) j["batch"] = batch;
    if (given("dropout")) j["dropout"] = dropout;
    if (given("patience")) j["patience"] = patience;
    if (given("max_epochs")) j["max_epochs"] = max_epochs;
    if (given("auto_finetune")) j["auto_finetune"] = auto_finetune;
    if (given("finetune_lr")) j["finetune_lr"] = finetune_lr;
    if (given("finetune_l2")) j["finetune_l2"] = finetune_l2;
    if (given("batch_mean")) j["batch_mean"] = batch_mean;
    if (given("clip_norm")) j["clip_norm"] = clip_norm;
    if (given("log_seconds")) j["log_seconds"] = !no_timing;
    if (given("order")) j["order"] = order;
    if (given("eval_every")) j["eval_every"] = eval_every;
    if (given("stop_at_ler")) j["stop_at_ler"] = stop_at_ler;
    return j;
  }
};

struct TrainArgs {
  std::string config;
  std::string alphabet;
  std::string train;
  std::string dev;
  std::string stats;
  std::string checkpoint;
  std::string metrics;
  std::string resume;
  std::string init;
  std::string precision = "f32";
  TrainFlags flags;
};

template <typename T>
NormalizationStats<T> stats_for(const std::string& stats_path,
                                const Manifest& train) {
  if (!stats_path.empty()) return NormalizationStats<T>::load(stats_path);
  std::cerr << "fitting normalization statistics on " << train.size()
            << " training utterances\n";
  return fit_normalization<T>(train);
}

template <typename T>
int run_train(const TrainArgs& a) {
  // Precedence: flags > config file "training" section > built-in defaults.
  nlohmann::json file_training = nlohmann::json::object();
  std::optional<NetworkConfig> file_network;
  if (!a.config.empty()) {
    const auto doc = load_json_file(a.config);
    if (doc.contains("training")) file_training = doc.at("training");
    if (doc.contains("layers")) file_network = network_config_from_json(doc);
  }

  TrainingState<T> state;
  TrainSettings settings;
  if (!a.resume.empty()) {
    state = load_checkpoint<T>(a.resume);
    settings = TrainSettings::from_json(state.progress.settings, {});
    settings = TrainSettings::from_json(a.flags.overrides(), settings);
    std::cerr << "resuming after epoch " << state.progress.epoch << '\n';
  } else {
    settings = TrainSettings::from_json(file_training, {});
    settings = TrainSettings::from_json(a.flags.overrides(), settings);
    if (!a.init.empty()) {
      const auto source = load_checkpoint<T>(a.init);
      state = state_from_init(source, settings);
    } else {
      if (a.alphabet.empty()) throw CLI::ValidationError("--alphabet is required");
      const Alphabet alphabet = Alphabet::load(a.alphabet);
      const NetworkConfig config =
          file_network ? *file_network : default_network_config();
      const Manifest train = load_manifest(a.train, alphabet);
      state = fresh_state<T>(config, alphabet, stats_for<T>(a.stats, train),
                             settings);
    }
  }
  if (!a.alphabet.empty() && !(Alphabet::load(a.alphabet) == state.alphabet)) {
    throw std::invalid_argument("--alphabet differs from the checkpoint's alphabet");
  }

  const Manifest train_m = load_manifest(a.train, state.alphabet);
  const Manifest dev_m = load_manifest(a.dev, state.alphabet);
  const auto train_set = load_dataset(train_m, state.stats);
  const auto dev_set = load_dataset(dev_m, state.stats);
  std::cerr << "train " << train_set.size() << " utterances, dev "
            << dev_set.size() << ", " << state.params.scalar_count()
            << " parameters, stage " << to_string(state.optimizer.config.stage)
            << '\n';

  TrainPaths paths{a.checkpoint, a.metrics};
  const auto summary = train(state, train_set, dev_set, settings, paths, &std::cerr);
  std::cerr << "stopped (" << summary.stop_reason << ") after epoch "
            << state.progress.epoch << "; best dev LER ";
  if (summary.best_dev_ler) {
    std::cerr << *summary.best_dev_ler << " at epoch " << summary.best_epoch;
  } else {
    std::cerr << "n/a";
  }
  std::cerr << '\n';
  return 0;
}

std::string checkpoint_precision(const std::string& flag, const std::string& ckpt) {
  if (!flag.empty()) return flag;
  return checkpoint_dtype(ckpt) == 8 ? "f64" : "f32";
}

template <typename T>
int run_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& map_path, const std::string& json_out,
             bool per_utterance) {
  const auto state = load_checkpoint<T>(ckpt);
  const Manifest m = load_manifest(manifest_path, state.alphabet);
  const auto data = load_dataset(m, state.stats);
  std::optional<SymbolMap> map;
  if (!map_path.empty()) map = SymbolMap::load(map_path, state.alphabet);
  const auto report = evaluate(state.config, state.params, state.alphabet, data,
                               map ? &*map : nullptr);
  if (per_utterance) {
    for (const auto& u : report.utterances) {
      std::cout << u.id << '\t' << u.edits.distance << '\t';
      for (std::size_t i = 0; i < u.hypothesis.size(); ++i) {
        std::cout << (i ? " " : "") << u.hypothesis[i];
      }
      std::cout << '\n';
    }
  }
  std::cout << "utterances " << report.utterances.size() << ", reference "
            << report.reference_length << ", S " << report.totals.substitutions
            << " I " << report.totals.insertions << " D "
            << report.totals.deletions << ", error rate " << report.error_rate()
            << '\n';
  if (!json_out.empty()) {
    std::ofstream os(json_out);
    if (!os) throw FormatError("cannot write " + json_out);
    os << report.to_json().dump(2) << '\n';
  }
  return 0;
}

template <typename T>
int run_decode(const std::string& ckpt, const std::string& features) {
  const auto state = load_checkpoint<T>(ckpt);
  const auto raw = load_tensor_file<T>(features);
  if (raw.rank() != 2 || raw.extent(0) != state.config.input_bands) {
    throw ShapeError(features + ": expected static features [" +
                     std::to_string(state.config.input_bands) +
                     " bands x frames] (" +
                     std::to_string(state.config.input_channels) +
                     " channels after deltas), got " + shape_string(raw.shape()));
  }
  const auto x = assemble_input(raw, state.stats);
  const auto labels = decode_input(state.config, state.params, x);
  std::cout << join_symbols(labels, state.alphabet) << '\n';
  return 0;
}

int run_verify(const std::string& suite) {
  bool ok = true;
  auto run = [&](const SuiteResult& r) {
    print_suite(std::cout, r);
    ok = ok && r.passed;
  };
  if (suite == "gradcheck" || suite == "all") run(run_gradcheck());
  if (suite == "ctc-oracle" || suite == "all") run(run_ctc_oracle());
  if (suite == "shapes" || suite == "all") run(run_shapes());
  return ok ? 0 : 1;
}

template <typename T>
int run_fit_stats(const std::string& alphabet, const std::string& train,
                  const std::string& out) {
  const Manifest m = load_manifest(train, Alphabet::load(alphabet));
  const auto stats = fit_normalization<T>(m);
  stats.save(out);
  std::cerr << "wrote " << out << " (" << stats.bands() << " bands, "
            << m.size() << " utterances)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional CTC sequence labeling"};
  app.require_subcommand(1);

  // train
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model (Adam, then optional SGD fine-tune)");
  train_cmd->add_option("--config", ta.config, "Network/training JSON (default: built-in 10-conv maxout network)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--alphabet", ta.alphabet, "Alphabet file")->check(CLI::ExistingFile);
  train_cmd->add_option("--train", ta.train, "Training manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", ta.dev, "Dev manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--stats", ta.stats, "Normalization stats (default: fit on --train)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint", ta.checkpoint, "Best-on-dev checkpoint; latest goes to <path>.last")
      ->required();
  train_cmd->add_option("--metrics", ta.metrics, "Metrics log, one JSON line per epoch (appended)");
  auto* resume_opt = train_cmd->add_option("--resume", ta.resume, "Continue a run from a checkpoint")
                         ->check(CLI::ExistingFile);
  train_cmd->add_option("--init", ta.init, "Start a new stage from a checkpoint's parameters")
      ->check(CLI::ExistingFile)
      ->excludes(resume_opt);
  train_cmd->add_option("--precision", ta.precision, "Scalar type")
      ->check(CLI::IsMember({"f32", "f64"}));
  ta.flags.add(train_cmd);

  // eval
  std::string e_ckpt, e_manifest, e_map, e_json, e_prec;
  bool e_per_utt = false;
  auto* eval_cmd = app.add_subcommand("eval", "Best-path decode a manifest and score it");
  eval_cmd->add_option("--checkpoint", e_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--test,--manifest", e_manifest, "Manifest to score")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--map", e_map, "Scoring map: '<symbol> [<target>]' per line")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--json", e_json, "Write the full report as JSON");
  eval_cmd->add_flag("--per-utterance", e_per_utt, "Print id, distance and hypothesis per utterance");
  eval_cmd->add_option("--precision", e_prec, "Scalar type (default: checkpoint's)")
      ->check(CLI::IsMember({"f32", "f64"}));

  // decode
  std::string d_ckpt, d_feats, d_prec;
  auto* decode_cmd = app.add_subcommand("decode", "Print the best-path decode of one feature file");
  decode_cmd->add_option("--checkpoint", d_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--features", d_feats, "Static feature tensor [bands x frames]")
      ->required()
      ->check(CLI::ExistingFile);
  decode_cmd->add_option("--precision", d_prec, "Scalar type (default: checkpoint's)")
      ->check(CLI::IsMember({"f32", "f64"}));

  // verify
  std::string v_suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "Run the self-check suites");
  verify_cmd->add_option("--suite", v_suite, "Suite to run")
      ->check(CLI::IsMember({"gradcheck", "ctc-oracle", "shapes", "all"}));

  // gen-synthetic
  std::string g_task, g_out;
  SyntheticTask g_defaults;
  std::size_t g_symbols = 0, g_bands = 0, g_train = 0, g_dev = 0, g_test = 0;
  double g_noise = 0;
  std::uint64_t g_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a seeded synthetic corpus");
  gen_cmd->add_option("--task", g_task, "Task JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", g_out, "Output directory")->required();
  auto* o_sym = gen_cmd->add_option("--symbols", g_symbols, "Non-blank symbols (default 5)");
  auto* o_bands = gen_cmd->add_option("--bands", g_bands, "Bands (default 41)");
  auto* o_noise = gen_cmd->add_option("--noise", g_noise, "Noise std (default 0.1)");
  auto* o_train = gen_cmd->add_option("--train-count", g_train, "Training utterances (default 500)");
  auto* o_dev = gen_cmd->add_option("--dev-count", g_dev, "Dev utterances (default 50)");
  auto* o_test = gen_cmd->add_option("--test-count", g_test, "Test utterances (default 50)");
  auto* o_seed = gen_cmd->add_option("--seed", g_seed, "Generator seed (default 1)");

  // fit-stats
  std::string f_alpha, f_train, f_out, f_prec = "f32";
  auto* fit_cmd = app.add_subcommand("fit-stats", "Fit per-dimension normalization on a manifest");
  fit_cmd->add_option("--alphabet", f_alpha, "Alphabet file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--train", f_train, "Training manifest")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", f_out, "Output stats file")->required();
  fit_cmd->add_option("--precision", f_prec, "Scalar type")->check(CLI::IsMember({"f32", "f64"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      return ta.precision == "f64" ? run_train<double>(ta) : run_train<float>(ta);
    }
    if (*eval_cmd) {
      return checkpoint_precision(e_prec, e_ckpt) == "f64"
                 ? run_eval<double>(e_ckpt, e_manifest, e_map, e_json, e_per_utt)
                 : run_eval<float>(e_ckpt, e_manifest, e_map, e_json, e_per_utt);
    }
    if (*decode_cmd) {
      return checkpoint_precision(d_prec, d_ckpt) == "f64"
                 ? run_decode<double>(d_ckpt, d_feats)
                 : run_decode<float>(d_ckpt, d_feats);
    }
    if (*verify_cmd) return run_verify(v_suite);
    if (*gen_cmd) {
      SyntheticTask task = g_task.empty() ? g_defaults : SyntheticTask::load(g_task);
      if (o_sym->count()) task.symbols = g_symbols;
      if (o_bands->count()) task.bands = g_bands;
      if (o_noise->count()) task.noise_std = g_noise;
      if (o_train->count()) task.train_count = g_train;
      if (o_dev->count()) task.dev_count = g_dev;
      if (o_test->count()) task.test_count = g_test;
      if (o_seed->count()) task.seed = g_seed;
      const auto corpus = generate_synthetic(task, g_out);
      std::cout << corpus.alphabet.string() << '\n'
                << corpus.train.string() << '\n'
                << corpus.dev.string() << '\n'
                << corpus.test.string() << '\n';
      return 0;
    }
    if (*fit_cmd) {
      return f_prec == "f64" ? run_fit_stats<double>(f_alpha, f_train, f_out)
                             : run_fit_stats<float>(f_alpha, f_train, f_out);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
