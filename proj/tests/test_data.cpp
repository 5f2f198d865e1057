#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "convctc/data.hpp"
#include "convctc/network.hpp"
#include "convctc/tensor_io.hpp"

using namespace convctc;
namespace fs = std::filesystem;

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

Dataset<double> toy_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, 9);
  std::normal_distribution<double> g;
  Dataset<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    Utterance<double> u;
    u.id = "u" + std::to_string(i);
    u.input = Tensor<double>({3, 2, len(rng)});
    for (auto& v : u.input.data()) v = g(rng);
    u.labels = {1 + i % 2};
    d.items.push_back(std::move(u));
  }
  return d;
}

SyntheticTask tiny_task() {
  SyntheticTask t;
  t.symbols = 3;
  t.bands = 5;
  t.min_frames = 6;
  t.max_frames = 15;
  t.train_count = 12;
  t.dev_count = 3;
  t.test_count = 3;
  t.seed = 4;
  return t;
}

}  // namespace

TEST(Manifest, EmptyIsValid) {
  TempDir dir("manifest_empty");
  std::ofstream(dir.path / "m.tsv");
  const auto m = load_manifest(dir.path / "m.tsv", Alphabet({"a"}));
  EXPECT_EQ(m.size(), 0u);
  EXPECT_THROW(fit_normalization<float>(m), std::invalid_argument);
}

TEST(Manifest, UnknownSymbolIsNamed) {
  TempDir dir("manifest_unknown");
  save_tensor_file(dir.path / "x.tnsr", Tensor<float>({2, 4}));
  std::ofstream(dir.path / "m.tsv") << "utt1\tx.tnsr\ta zz a\n";
  try {
    load_manifest(dir.path / "m.tsv", Alphabet({"a"}));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Manifest, MalformedLinesRejected) {
  TempDir dir("manifest_bad");
  save_tensor_file(dir.path / "x.tnsr", Tensor<float>({2, 4}));
  const Alphabet al({"a"});
  std::ofstream(dir.path / "m1.tsv") << "utt1 x.tnsr a\n";
  EXPECT_THROW(load_manifest(dir.path / "m1.tsv", al), FormatError);
  std::ofstream(dir.path / "m2.tsv") << "u\tx.tnsr\ta\nu\tx.tnsr\ta\n";
  EXPECT_THROW(load_manifest(dir.path / "m2.tsv", al), FormatError);
  std::ofstream(dir.path / "m3.tsv") << "u\tmissing.tnsr\ta\n";
  EXPECT_THROW(load_manifest(dir.path / "m3.tsv", al), FormatError);
}

TEST(Manifest, RoundTrip) {
  TempDir dir("manifest_rt");
  save_tensor_file(dir.path / "x.tnsr", Tensor<float>({2, 4}));
  const Alphabet al({"a", "b"});
  Manifest m;
  m.base_dir = dir.path;
  m.entries.push_back({"one", "x.tnsr", {1, 2, 2}});
  m.entries.push_back({"two", "x.tnsr", {}});
  save_manifest(dir.path / "m.tsv", m, al);
  const auto back = load_manifest(dir.path / "m.tsv", al);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries[0].labels, (LabelSequence{1, 2, 2}));
  EXPECT_TRUE(back.entries[1].labels.empty());
  EXPECT_EQ(back.resolve(back.entries[0]), dir.path / "x.tnsr");
}

TEST(Batching, SizesAndPadding) {
  const auto d = toy_dataset(45, 1);
  std::mt19937_64 rng(2);
  const auto batches = make_batches(d, 20, rng);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 20u);
  EXPECT_EQ(batches[1].size(), 20u);
  EXPECT_EQ(batches[2].size(), 5u);
  for (const auto& b : batches) {
    const std::size_t F = b.max_frames();
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto& src = d.items[b.source_index[i]];
      EXPECT_EQ(b.lengths[i], src.input.extent(2));
      EXPECT_EQ(b.item(i), src.input);
      const auto pad = b.padded_item(i);
      for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t t = b.lengths[i]; t < F; ++t) EXPECT_EQ(pad[r * F + t], 0.0);
    }
  }
}

TEST(Batching, SeededAndCovering) {
  const auto d = toy_dataset(45, 1);
  std::mt19937_64 r1(7), r2(7);
  const auto a = make_batches(d, 20, r1);
  const auto b = make_batches(d, 20, r2);
  std::multiset<std::size_t> seen;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].source_index, b[k].source_index);
    seen.insert(a[k].source_index.begin(), a[k].source_index.end());
  }
  EXPECT_EQ(seen.size(), 45u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 45u);
  // a second draw from the same stream is a different permutation
  const auto c = make_batches(d, 20, r1);
  EXPECT_NE(a[0].source_index, c[0].source_index);
}

TEST(Batching, Orders) {
  const auto d = toy_dataset(10, 3);
  std::mt19937_64 rng(1);
  const auto listed = make_batches(d, 4, rng, BatchOrder::as_listed);
  EXPECT_EQ(listed[0].source_index, (std::vector<std::size_t>{0, 1, 2, 3}));
  const auto sorted = make_batches(d, 10, rng, BatchOrder::length_sorted);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LE(sorted[0].lengths[i - 1], sorted[0].lengths[i]);
}

TEST(Batching, PaddedAndTrueLengthLossAgree) {
  NetworkConfig c;
  c.input_channels = 3;
  c.input_bands = 2;
  c.alphabet_size = 3;
  LayerConfig conv;
  conv.kind = LayerKind::conv;
  conv.width = 4;
  conv.filter_freq = 3;
  conv.filter_time = 5;
  c.layers.push_back(conv);
  LayerConfig out;
  out.kind = LayerKind::dense;
  out.width = 3;
  out.activation = Activation::linear;
  c.layers.push_back(out);
  c.validate();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  ParameterSet<double> p;
  for (const auto& s : parameter_shapes(c)) {
    Tensor<double> t(s.shape);
    for (auto& v : t.data()) v = u(rng);
    p.entries.push_back({s.name, s.cls, s.layer, std::move(t)});
  }
  const auto d = toy_dataset(8, 6);
  const auto batches = make_batches(d, 8, rng);
  const auto& b = batches[0];
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto exact = network_forward(b.item(i), c, p, Mode::inference).log_probs;
    const auto padded =
        network_forward(b.padded_item(i), c, p, Mode::inference, nullptr, b.lengths[i]).log_probs;
    const auto l1 = ctc_loss(exact, b.targets[i]).loss;
    const auto l2 = ctc_loss(take_frames(padded, b.lengths[i]), b.targets[i]).loss;
    EXPECT_NEAR(l1, l2, 1e-12);
  }
}

TEST(Synthetic, ByteIdenticalAcrossRuns) {
  TempDir a("syn_a"), b("syn_b");
  generate_synthetic(tiny_task(), a.path);
  generate_synthetic(tiny_task(), b.path);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path);
    EXPECT_EQ(slurp(e.path()), slurp(b.path / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 5u + 18u);
}

TEST(Synthetic, UtterancesAreFeasibleAndSized) {
  TempDir dir("syn_feasible");
  const auto task = tiny_task();
  const auto corpus = generate_synthetic(task, dir.path);
  const auto al = Alphabet::load(corpus.alphabet);
  EXPECT_EQ(al.size(), task.symbols + 1);
  for (const auto& split : {corpus.train, corpus.dev, corpus.test}) {
    const auto m = load_manifest(split, al);
    for (const auto& e : m.entries) {
      const auto x = load_tensor_file<float>(m.resolve(e));
      ASSERT_EQ(x.rank(), 2u);
      EXPECT_EQ(x.extent(0), task.bands);
      EXPECT_GE(x.extent(1), task.min_frames);
      EXPECT_LE(x.extent(1), task.max_frames);
      EXPECT_FALSE(e.labels.empty());
      EXPECT_LE(min_frames_for(e.labels), x.extent(1));
    }
  }
  EXPECT_EQ(SyntheticTask::from_json_text(task.to_json_text()).to_json_text(),
            task.to_json_text());
}

TEST(Synthetic, InvalidTasksRejected) {
  TempDir dir("syn_invalid");
  auto t = tiny_task();
  t.symbols = 0;
  EXPECT_THROW(generate_synthetic(t, dir.path), std::invalid_argument);
  t = tiny_task();
  t.min_frames = 2;
  EXPECT_THROW(generate_synthetic(t, dir.path), std::invalid_argument);
}

TEST(Dataset, LoadAssemblesNormalizedInputs) {
  TempDir dir("dataset_load");
  const auto corpus = generate_synthetic(tiny_task(), dir.path);
  const auto al = Alphabet::load(corpus.alphabet);
  const auto m = load_manifest(corpus.train, al);
  const auto stats = fit_normalization<double>(m);
  const auto d = load_dataset(m, stats);
  ASSERT_EQ(d.size(), m.size());
  EXPECT_EQ(d.items[0].input.extent(0), 3u);
  EXPECT_EQ(d.items[0].input.extent(1), 5u);
  EXPECT_EQ(d.items[0].labels, m.entries[0].labels);
}
