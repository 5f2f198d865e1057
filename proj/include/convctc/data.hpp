#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "convctc/ctc.hpp"
#include "convctc/features.hpp"
#include "convctc/tensor.hpp"

namespace convctc {

// ---------------------------------------------------------------------------
// Manifests: "<id>\t<feature path>\t<space-separated symbols>" per line.
// Relative feature paths resolve against the manifest's directory.

struct ManifestEntry {
  std::string id;
  std::filesystem::path features;  // as written in the manifest
  LabelSequence labels;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::size_t size() const { return entries.size(); }
};

Manifest load_manifest(const std::filesystem::path& path,
                       const Alphabet& alphabet);

void save_manifest(const std::filesystem::path& path, const Manifest& manifest,
                   const Alphabet& alphabet);

/// Streams every training utterance (static + deltas) through the
/// normalization accumulator, in manifest order.
template <typename T>
NormalizationStats<T> fit_normalization(const Manifest& manifest);

// ---------------------------------------------------------------------------
// In-memory datasets and batches

template <typename T>
struct Utterance {
  std::string id;
  Tensor<T> input;  // normalized [3 x bands x frames]
  LabelSequence labels;
};

template <typename T>
struct Dataset {
  std::vector<Utterance<T>> items;
  std::size_t size() const { return items.size(); }
};

/// Loads and assembles every utterance with the given statistics.
template <typename T>
Dataset<T> load_dataset(const Manifest& manifest,
                        const NormalizationStats<T>& stats);

template <typename T>
struct Batch {
  Tensor<T> features;  // [B x 3 x bands x max_frames], zero past each length
  std::vector<std::size_t> lengths;
  std::vector<LabelSequence> targets;
  std::vector<std::string> ids;
  std::vector<std::size_t> source_index;  // position in the dataset

  std::size_t size() const { return lengths.size(); }
  std::size_t max_frames() const { return features.extent(3); }
  /// Padded [3 x bands x max_frames] slice of item i.
  Tensor<T> padded_item(std::size_t i) const;
  /// Item i cut to its true length.
  Tensor<T> item(std::size_t i) const;
};

enum class BatchOrder { as_listed, shuffled, length_sorted };

/// Groups utterances into batches of `batch_size` (the final batch may be
/// shorter). Shuffling draws one permutation from `rng` per call.
template <typename T>
std::vector<Batch<T>> make_batches(const Dataset<T>& data,
                                   std::size_t batch_size, std::mt19937_64& rng,
                                   BatchOrder order = BatchOrder::shuffled);

// ---------------------------------------------------------------------------
// Synthetic stand-in task

struct SyntheticTask {
  std::size_t symbols = 5;
  std::size_t bands = 41;
  std::size_t min_frames = 20;
  std::size_t max_frames = 40;
  double noise_std = 0.1;
  std::size_t train_count = 500;
  std::size_t dev_count = 50;
  std::size_t test_count = 50;
  std::uint64_t seed = 1;

  static SyntheticTask load(const std::filesystem::path& path);
  static SyntheticTask from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct SyntheticCorpus {
  std::filesystem::path alphabet;
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path test;
};

/// Shortest and longest symbol renderings, in frames.
inline constexpr std::size_t kSyntheticMinDuration = 3;
inline constexpr std::size_t kSyntheticMaxDuration = 10;

/// Writes alphabet.txt, {train,dev,test}.tsv and feats/*.tnsr (f32) under
/// `out_dir`. Each symbol is a fixed random band template held for 3-10
/// frames, separated by optional silent gaps, plus Gaussian noise. Identical
/// tasks produce byte-identical output.
SyntheticCorpus generate_synthetic(const SyntheticTask& task,
                                   const std::filesystem::path& out_dir);

}  // namespace convctc
