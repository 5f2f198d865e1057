#include "convctc/data.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "convctc/tensor_io.hpp"
#include "json.hpp"

namespace convctc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifests

fs::path Manifest::resolve(const ManifestEntry& e) const {
  return e.features.is_absolute() ? e.features : base_dir / e.features;
}

Manifest load_manifest(const fs::path& path, const Alphabet& alphabet) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto tab1 = line.find('\t');
    const auto tab2 =
        tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw FormatError(where + ": expected <id>\\t<features>\\t<labels>");
    }
    ManifestEntry e;
    e.id = line.substr(0, tab1);
    e.features = line.substr(tab1 + 1, tab2 - tab1 - 1);
    if (e.id.empty() || e.features.empty()) {
      throw FormatError(where + ": empty id or feature path");
    }
    if (!seen.insert(e.id).second) {
      throw FormatError(where + ": duplicate utterance id " + e.id);
    }
    std::istringstream labels(line.substr(tab2 + 1));
    std::string sym;
    while (labels >> sym) {
      if (!alphabet.contains(sym) || alphabet.index(sym) == kBlank) {
        throw FormatError(where + ": utterance " + e.id +
                          " uses unknown symbol '" + sym + "'");
      }
      e.labels.push_back(alphabet.index(sym));
    }
    if (!fs::exists(m.resolve(e))) {
      throw FormatError(where + ": missing feature file " +
                        m.resolve(e).string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest,
                   const Alphabet& alphabet) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries) {
    os << e.id << '\t' << e.features.generic_string() << '\t'
       << join_symbols(e.labels, alphabet) << '\n';
  }
}

template <typename T>
NormalizationStats<T> fit_normalization(const Manifest& manifest) {
  if (manifest.entries.empty()) {
    throw std::invalid_argument("cannot fit normalization on an empty manifest");
  }
  std::optional<NormalizationAccumulator<T>> acc;
  for (const auto& e : manifest.entries) {
    const auto stat = load_tensor_file<T>(manifest.resolve(e));
    if (stat.rank() != 2) {
      throw ShapeError(manifest.resolve(e).string() +
                       ": static features must be rank 2, got " +
                       shape_string(stat.shape()));
    }
    if (!acc) acc.emplace(stat.extent(0));
    acc->add(stack_deltas(stat));
  }
  return acc->finish();
}

template <typename T>
Dataset<T> load_dataset(const Manifest& manifest,
                        const NormalizationStats<T>& stats) {
  Dataset<T> data;
  data.items.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    const auto path = manifest.resolve(e);
    Tensor<T> stat = load_tensor_file<T>(path);
    try {
      data.items.push_back({e.id, assemble_input(stat, stats), e.labels});
    } catch (const ShapeError& err) {
      throw ShapeError(path.string() + ": " + err.what());
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Batches

template <typename T>
Tensor<T> Batch<T>::padded_item(std::size_t i) const {
  const Shape shape{features.extent(1), features.extent(2), features.extent(3)};
  const std::size_t n = shape_product(shape);
  std::vector<T> data(features.raw() + i * n, features.raw() + (i + 1) * n);
  return Tensor<T>(shape, std::move(data));
}

template <typename T>
Tensor<T> Batch<T>::item(std::size_t i) const {
  return take_frames(padded_item(i), lengths.at(i));
}

template <typename T>
std::vector<Batch<T>> make_batches(const Dataset<T>& data,
                                   std::size_t batch_size, std::mt19937_64& rng,
                                   BatchOrder order) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (order == BatchOrder::shuffled) {
    // Fisher-Yates with explicit draws; std::shuffle's use of the engine is
    // implementation-specific.
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(idx[i - 1], idx[pick(rng)]);
    }
  } else if (order == BatchOrder::length_sorted) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return data.items[a].input.extent(2) < data.items[b].input.extent(2);
    });
  }
  std::vector<Batch<T>> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    Batch<T> b;
    std::size_t max_frames = 0;
    for (std::size_t j = start; j < end; ++j) {
      max_frames = std::max(max_frames, data.items[idx[j]].input.extent(2));
    }
    const auto& first = data.items[idx[start]].input;
    const std::size_t channels = first.extent(0);
    const std::size_t bands = first.extent(1);
    b.features = Tensor<T>({end - start, channels, bands, max_frames});
    for (std::size_t j = start; j < end; ++j) {
      const auto& u = data.items[idx[j]];
      const std::size_t f = u.input.extent(2);
      const std::size_t rows = channels * bands;
      T* dst = b.features.raw() + (j - start) * rows * max_frames;
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(u.input.raw() + r * f, f, dst + r * max_frames);
      }
      b.lengths.push_back(f);
      b.targets.push_back(u.labels);
      b.ids.push_back(u.id);
      b.source_index.push_back(idx[j]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic task

SyntheticTask SyntheticTask::from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SyntheticTask t;
  t.symbols = j.at("symbols").get<std::size_t>();
  t.bands = j.at("bands").get<std::size_t>();
  t.min_frames = j.at("min_frames").get<std::size_t>();
  t.max_frames = j.at("max_frames").get<std::size_t>();
  t.noise_std = j.at("noise_std").get<double>();
  const auto& counts = j.at("counts");
  t.train_count = counts.at("train").get<std::size_t>();
  t.dev_count = counts.at("dev").get<std::size_t>();
  t.test_count = counts.at("test").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

SyntheticTask SyntheticTask::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open task spec " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string SyntheticTask::to_json_text() const {
  nlohmann::ordered_json j;
  j["symbols"] = symbols;
  j["bands"] = bands;
  j["min_frames"] = min_frames;
  j["max_frames"] = max_frames;
  j["noise_std"] = noise_std;
  j["counts"] = {{"train", train_count}, {"dev", dev_count},
                 {"test", test_count}};
  j["seed"] = seed;
  return j.dump(2);
}

namespace {

struct RenderedUtterance {
  Tensor<float> statics;
  LabelSequence labels;
};

RenderedUtterance render_utterance(const SyntheticTask& task,
                                   const std::vector<std::vector<double>>& templates,
                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> length(task.min_frames,
                                                    task.max_frames);
  std::uniform_int_distribution<std::size_t> symbol(1, task.symbols);
  std::uniform_int_distribution<std::size_t> gap(0, 2);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t frames = length(rng);
  // Frame-level symbol assignment; 0 = silence.
  std::vector<std::size_t> frame_symbol(frames, 0);
  LabelSequence labels;
  std::size_t pos = 0;
  std::size_t prev = 0;
  while (pos < frames) {
    std::size_t silence = gap(rng);
    const std::size_t sym = symbol(rng);
    // A repeated symbol must be separated by silence to stay distinguishable.
    if (sym == prev && silence == 0) silence = 1;
    pos += silence;
    if (pos + kSyntheticMinDuration > frames) break;
    std::uniform_int_distribution<std::size_t> duration(
        kSyntheticMinDuration,
        std::min(kSyntheticMaxDuration, frames - pos));
    const std::size_t dur = duration(rng);
    std::fill_n(frame_symbol.begin() + static_cast<std::ptrdiff_t>(pos), dur,
                sym);
    labels.push_back(sym);
    pos += dur;
    prev = sym;
  }

  Tensor<float> statics({task.bands, frames});
  for (std::size_t t = 0; t < frames; ++t) {
    const auto& tpl = templates[frame_symbol[t]];
    for (std::size_t b = 0; b < task.bands; ++b) {
      const double n = task.noise_std > 0 ? task.noise_std * noise(rng) : 0.0;
      statics[b * frames + t] = static_cast<float>(tpl[b] + n);
    }
  }
  return {std::move(statics), std::move(labels)};
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticTask& task,
                                   const fs::path& out_dir) {
  if (task.symbols == 0) {
    throw std::invalid_argument("synthetic task needs at least one symbol");
  }
  if (task.bands == 0) {
    throw std::invalid_argument("synthetic task needs at least one band");
  }
  if (task.min_frames < kSyntheticMinDuration ||
      task.max_frames < task.min_frames) {
    throw std::invalid_argument(
        "synthetic frame range must satisfy 3 <= min_frames <= max_frames");
  }
  if (task.noise_std < 0) {
    throw std::invalid_argument("noise_std must be non-negative");
  }

  std::mt19937_64 rng(task.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  // Index 0 is silence (all zeros); symbols get i.i.d. N(0,1) templates.
  std::vector<std::vector<double>> templates(task.symbols + 1,
                                             std::vector<double>(task.bands));
  for (std::size_t s = 1; s <= task.symbols; ++s) {
    for (auto& v : templates[s]) v = unit(rng);
  }

  std::vector<std::string> names;
  for (std::size_t s = 1; s <= task.symbols; ++s) {
    names.push_back("s" + std::to_string(s));
  }
  const Alphabet alphabet(names);

  fs::create_directories(out_dir / "feats");
  SyntheticCorpus corpus;
  corpus.alphabet = out_dir / "alphabet.txt";
  alphabet.save(corpus.alphabet);

  auto write_split = [&](const std::string& split, std::size_t count) {
    Manifest m;
    m.base_dir = out_dir;
    for (std::size_t i = 0; i < count; ++i) {
      std::ostringstream id;
      id << split << '_' << std::setw(5) << std::setfill('0') << i;
      auto u = render_utterance(task, templates, rng);
      const fs::path rel = fs::path("feats") / (id.str() + ".tnsr");
      save_tensor_file(out_dir / rel, u.statics);
      m.entries.push_back({id.str(), rel, std::move(u.labels)});
    }
    const fs::path path = out_dir / (split + ".tsv");
    save_manifest(path, m, alphabet);
    return path;
  };
  corpus.train = write_split("train", task.train_count);
  corpus.dev = write_split("dev", task.dev_count);
  corpus.test = write_split("test", task.test_count);

  std::ofstream(out_dir / "task.json", std::ios::trunc)
      << task.to_json_text() << '\n';
  return corpus;
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template NormalizationStats<T> fit_normalization<T>(const Manifest&);        \
  template Dataset<T> load_dataset<T>(const Manifest&,                         \
                                      const NormalizationStats<T>&);           \
  template struct Batch<T>;                                                    \
  template std::vector<Batch<T>> make_batches<T>(                              \
      const Dataset<T>&, std::size_t, std::mt19937_64&, BatchOrder);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
