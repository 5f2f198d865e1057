#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "convctc/checkpoint.hpp"
#include "convctc/config_json.hpp"
#include "convctc/scoring.hpp"
#include "convctc/tensor_io.hpp"
#include "convctc/trainer.hpp"
#include "convctc/verify.hpp"

using namespace convctc;
namespace fs = std::filesystem;
using Strings = std::vector<std::string>;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("convctc_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct CommandResult {
  int status;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CONVCTC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int rc = pclose(pipe);
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, out};
}

NetworkConfig tiny_network(std::size_t bands, std::size_t alphabet) {
  return network_config_from_json(nlohmann::json::parse(
      R"({"input":{"channels":3,"bands":)" + std::to_string(bands) +
      R"(},"alphabet_size":)" + std::to_string(alphabet) + R"(,"layers":[
        {"kind":"conv","maps":6,"filter":[3,3]},
        {"kind":"dropout","rate":0.2},
        {"kind":"dense","units":)" + std::to_string(alphabet) +
      R"(,"activation":"linear"}]})"));
}

struct TinyCorpus {
  TempDir dir;
  Alphabet alphabet;
  Dataset<double> train, dev;
  NormalizationStats<double> stats;

  TinyCorpus()
      : dir(std::string("corpus_") +
            ::testing::UnitTest::GetInstance()->current_test_info()->name()) {
    SyntheticTask t;
    t.symbols = 3;
    t.bands = 5;
    t.min_frames = 8;
    t.max_frames = 14;
    t.train_count = 10;
    t.dev_count = 4;
    t.test_count = 1;
    const auto c = generate_synthetic(t, dir.path);
    alphabet = Alphabet::load(c.alphabet);
    const auto tm = load_manifest(c.train, alphabet);
    stats = fit_normalization<double>(tm);
    train = load_dataset(tm, stats);
    dev = load_dataset(load_manifest(c.dev, alphabet), stats);
  }
};

TrainSettings tiny_settings() {
  TrainSettings s;
  s.batch = 4;
  s.max_epochs = 3;
  s.patience = 10;
  s.lr = 1e-3;
  s.log_seconds = false;
  return s;
}

}  // namespace

TEST(Scoring, LevenshteinExamples) {
  const auto e = levenshtein({"a", "b", "c"}, {"a", "x", "c", "d"});
  EXPECT_EQ(e.distance, 2u);
  EXPECT_EQ(e.substitutions, 1u);
  EXPECT_EQ(e.insertions, 1u);
  EXPECT_EQ(e.deletions, 0u);
  EXPECT_EQ(levenshtein({}, {"a", "b"}).insertions, 2u);
  EXPECT_EQ(levenshtein({"a", "b"}, {}).deletions, 2u);
  EXPECT_EQ(levenshtein({"k", "i", "t"}, {"k", "i", "t"}).distance, 0u);
  EXPECT_EQ(levenshtein({"s", "i", "t", "t", "i", "n", "g"},
                        {"k", "i", "t", "t", "e", "n"}).distance, 3u);
}

TEST(Scoring, SymbolMapMergesAndDeletes) {
  const Alphabet al({"aa", "ao", "h#", "b"});
  const auto map = SymbolMap::from_text("# merges\nao aa\nh#\n", al);
  EXPECT_EQ(map.apply({1, 2, 3, 4}, al), (Strings{"aa", "aa", "b"}));
  EXPECT_EQ(SymbolMap().apply({2, 4}, al), (Strings{"ao", "b"}));
  const auto r = score(Strings{"u"}, {{1, 4}}, {{2, 4, 3}}, al, &map);
  EXPECT_EQ(r.totals.distance, 0u);
  EXPECT_THROW(SymbolMap::from_text("zz aa\n", al), FormatError);
  EXPECT_THROW(SymbolMap::from_text("aa\naa b\n", al), FormatError);
  EXPECT_THROW(SymbolMap::from_text("<blank> aa\n", al), FormatError);
}

TEST(Scoring, ErrorRateIsDistanceOverReferenceLength) {
  const Alphabet al({"a", "b"});
  const auto r = score(Strings{"u1", "u2"}, {{1, 2, 1}, {2}}, {{1, 1, 2}, {}}, al);
  EXPECT_EQ(r.totals.distance, 3u);
  EXPECT_EQ(r.reference_length, 4u);
  EXPECT_DOUBLE_EQ(r.error_rate(), 0.75);
  const auto j = r.to_json(true);
  EXPECT_EQ(j["utterances"], 2);
  EXPECT_EQ(j["per_utterance"].size(), 2u);
  EXPECT_DOUBLE_EQ(j["error_rate"].get<double>(), 0.75);
}

TEST(Scoring, InvariantUnderRelabeling) {
  const Alphabet al({"a", "b", "c"});
  const Alphabet renamed({"x", "y", "z"});
  const std::vector<LabelSequence> ref{{1, 2, 3, 3}, {2}}, hyp{{1, 3, 3}, {2, 1}};
  EXPECT_EQ(score(Strings{"p", "q"}, ref, hyp, al).totals.distance,
            score(Strings{"p", "q"}, ref, hyp, renamed).totals.distance);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt_rt");
  TinyCorpus corpus;
  auto state = fresh_state<double>(tiny_network(5, 4), corpus.alphabet, corpus.stats,
                                   tiny_settings());
  state.progress.epoch = 3;
  state.progress.best_dev_ler = 0.25;
  save_checkpoint(dir.path / "a.ckpt", state);
  const auto back = load_checkpoint<double>(dir.path / "a.ckpt");
  save_checkpoint(dir.path / "b.ckpt", back);
  EXPECT_EQ(slurp(dir.path / "a.ckpt"), slurp(dir.path / "b.ckpt"));
  EXPECT_EQ(checkpoint_dtype(dir.path / "a.ckpt"), 8u);  // element width in bytes
  for (std::size_t i = 0; i < state.params.size(); ++i)
    EXPECT_EQ(back.params[i].value, state.params[i].value);
  EXPECT_EQ(back.progress.best_dev_ler, 0.25);
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  TempDir dir("ckpt_bad");
  TinyCorpus corpus;
  auto state = fresh_state<float>(tiny_network(5, 4), corpus.alphabet,
                                  corpus.stats.cast<float>(), tiny_settings());
  save_checkpoint(dir.path / "a.ckpt", state);
  auto bytes = slurp(dir.path / "a.ckpt");
  std::ofstream(dir.path / "trail.ckpt", std::ios::binary) << bytes << 'x';
  EXPECT_THROW(load_checkpoint<float>(dir.path / "trail.ckpt"), FormatError);
  std::ofstream(dir.path / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint<float>(dir.path / "short.ckpt"), FormatError);
  auto bad = state;
  bad.params.entries[0].value = Tensor<float>({1});
  EXPECT_THROW(save_checkpoint(dir.path / "shape.ckpt", bad), ShapeError);
}

TEST(Checkpoint, RngStateRoundTrip) {
  std::mt19937_64 rng(5);
  rng.discard(17);
  auto copy = rng_from_state(rng_state(rng));
  EXPECT_EQ(copy(), rng());
}

TEST(Settings, JsonOverridesAndRejectsUnknown) {
  const auto s = TrainSettings::from_json(
      nlohmann::json::parse(R"({"batch":7,"stage":"sgd","stop_at_ler":0.1})"), {});
  EXPECT_EQ(s.batch, 7u);
  EXPECT_EQ(s.stage, Stage::sgd);
  EXPECT_EQ(s.optimizer_config().lr, 1e-5);
  EXPECT_EQ(s.stop_at_ler, 0.1);
  const auto again = TrainSettings::from_json(s.to_json(), {});
  EXPECT_EQ(again.to_json().dump(), s.to_json().dump());
  EXPECT_THROW(TrainSettings::from_json(nlohmann::json::parse(R"({"bach":7})"), {}),
               std::invalid_argument);
}

TEST(Trainer, BatchGradientIsSumOfSingles) {
  TinyCorpus corpus;
  const auto settings = tiny_settings();
  auto state = fresh_state<double>(tiny_network(5, 4), corpus.alphabet, corpus.stats,
                                   settings);
  for (auto& l : state.config.layers)
    if (l.kind == LayerKind::dropout) l.rate = 0.0;
  std::mt19937_64 rng(1);
  const auto both = make_batches(corpus.train, 2, rng, BatchOrder::as_listed);
  const auto single = make_batches(corpus.train, 1, rng, BatchOrder::as_listed);
  std::mt19937_64 drop(3);
  auto g2 = state.params.zeros_like();
  const auto l2 = batch_gradient(state.config, state.params, both[0], drop, false, g2);
  auto g1 = state.params.zeros_like();
  double l1 = 0;
  for (int i = 0; i < 2; ++i) {
    auto gi = state.params.zeros_like();
    l1 += batch_gradient(state.config, state.params, single[i], drop, false, gi).loss;
    g1.accumulate(gi);
  }
  EXPECT_NEAR(l2.loss, l1, 1e-9);
  for (std::size_t e = 0; e < g1.size(); ++e)
    for (std::size_t i = 0; i < g1[e].value.size(); ++i)
      EXPECT_NEAR(g2[e].value[i], g1[e].value[i], 1e-10);
  auto gm = state.params.zeros_like();
  batch_gradient(state.config, state.params, both[0], drop, true, gm);
  for (std::size_t i = 0; i < gm[0].value.size(); ++i)
    EXPECT_NEAR(gm[0].value[i], 0.5 * g2[0].value[i], 1e-12);
}

TEST(Trainer, DeterministicAndResumable) {
  TempDir dir("trainer_det");
  TinyCorpus corpus;
  const auto settings = tiny_settings();
  auto run = [&](const std::string& tag, std::size_t epochs) {
    auto s = settings;
    s.max_epochs = epochs;
    auto state = fresh_state<double>(tiny_network(5, 4), corpus.alphabet, corpus.stats, s);
    const TrainPaths paths{dir.path / (tag + ".ckpt"), dir.path / (tag + ".jsonl")};
    return train(state, corpus.train, corpus.dev, s, paths);
  };
  const auto a = run("a", 3);
  run("b", 3);
  EXPECT_EQ(a.epochs.size(), 3u);
  EXPECT_EQ(slurp(dir.path / "a.jsonl"), slurp(dir.path / "b.jsonl"));
  EXPECT_EQ(slurp(dir.path / "a.ckpt.last"), slurp(dir.path / "b.ckpt.last"));

  run("c", 2);
  auto resumed = load_checkpoint<double>(dir.path / "c.ckpt.last");
  EXPECT_EQ(resumed.progress.epoch, 2u);
  train(resumed, corpus.train, corpus.dev, settings,
        {dir.path / "c.ckpt", dir.path / "c.jsonl"});
  EXPECT_EQ(slurp(dir.path / "a.jsonl"), slurp(dir.path / "c.jsonl"));
  EXPECT_EQ(slurp(dir.path / "a.ckpt.last"), slurp(dir.path / "c.ckpt.last"));
}

TEST(Trainer, MetricsLineFields) {
  EpochRecord r;
  r.epoch = 4;
  r.train_loss = 1.5;
  r.dev_ler = 0.25;
  const auto j = nlohmann::json::parse(metrics_line(r));
  EXPECT_EQ(j["epoch"], 4);
  EXPECT_EQ(j["stage"], "adam");
  EXPECT_EQ(j["dev_ler"], 0.25);
  EXPECT_TRUE(j.contains("seconds"));
}

TEST(Verify, SuitesPass) {
  EXPECT_TRUE(run_ctc_oracle().passed);
  EXPECT_TRUE(run_shapes().passed);
  EXPECT_TRUE(run_gradcheck().passed);
}

TEST(Cli, EndToEndSmoke) {
  TempDir dir("cli_smoke");
  const auto d = dir.path.string();
  auto r = run_cli("gen-synthetic --out " + d + "/syn --bands 5 --symbols 3 "
                   "--train-count 8 --dev-count 3 --test-count 3");
  ASSERT_EQ(r.status, 0) << r.output;
  std::ofstream(dir.path / "net.json") << network_config_to_json(tiny_network(5, 4)).dump();
  r = run_cli("fit-stats --alphabet " + d + "/syn/alphabet.txt --train " + d +
              "/syn/train.tsv --out " + d + "/stats.tnsr");
  ASSERT_EQ(r.status, 0) << r.output;
  r = run_cli("train --config " + d + "/net.json --alphabet " + d +
              "/syn/alphabet.txt --train " + d + "/syn/train.tsv --dev " + d +
              "/syn/dev.tsv --stats " + d + "/stats.tnsr --checkpoint " + d +
              "/m.ckpt --metrics " + d + "/m.jsonl --epochs 2 --batch 4 --no-timing");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir.path / "m.ckpt"));
  r = run_cli("eval --checkpoint " + d + "/m.ckpt --test " + d + "/syn/test.tsv --json " + d +
              "/report.json");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir.path / "report.json")).contains("error_rate"));

  save_tensor_file(dir.path / "one.tnsr", Tensor<float>({5, 9}));
  r = run_cli("decode --checkpoint " + d + "/m.ckpt --features " + d + "/one.tnsr");
  EXPECT_EQ(r.status, 0) << r.output;
  save_tensor_file(dir.path / "wrong.tnsr", Tensor<float>({7, 9}));
  r = run_cli("decode --checkpoint " + d + "/m.ckpt --features " + d + "/wrong.tnsr");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("5"), std::string::npos);

  r = run_cli("train --config " + d + "/missing.json --alphabet x --train x --dev x "
              "--checkpoint y");
  EXPECT_NE(r.status, 0);
  r = run_cli("verify --suite nonsense");
  EXPECT_NE(r.status, 0);
}
