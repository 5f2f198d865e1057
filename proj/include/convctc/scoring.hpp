#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "convctc/ctc.hpp"
#include "convctc/data.hpp"
#include "convctc/network.hpp"
#include "json.hpp"

namespace convctc {

struct EditCounts {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  EditCounts& operator+=(const EditCounts& o);
};

/// Unit-cost Levenshtein alignment of hyp against ref. On ties the
/// backtrace prefers match/substitution, then deletion, then insertion.
EditCounts levenshtein(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp);

/// Maps alphabet symbols onto scoring symbols (e.g. 61 -> 39 phones).
/// File format, one entry per line: "<symbol> <target>" or "<symbol>" alone
/// to delete it before scoring. Unlisted symbols score as themselves.
class SymbolMap {
 public:
  SymbolMap() = default;
  static SymbolMap load(const std::filesystem::path& path,
                        const Alphabet& alphabet);
  static SymbolMap from_text(const std::string& text, const Alphabet& alphabet);

  /// Label indices to scoring symbols; deleted symbols are dropped.
  std::vector<std::string> apply(const LabelSequence& labels,
                                 const Alphabet& alphabet) const;

 private:
  // indexed by alphabet position; nullopt = delete
  std::vector<std::optional<std::string>> target_;
};

struct UtteranceScore {
  std::string id;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
  EditCounts edits;
};

struct EvalReport {
  std::vector<UtteranceScore> utterances;
  EditCounts totals;
  std::size_t reference_length = 0;

  /// Total edit distance over total reference length (0 when empty).
  double error_rate() const;
  nlohmann::ordered_json to_json(bool include_utterances = true) const;
};

/// Scores already-decoded sequences, in the given order.
EvalReport score(const std::vector<std::string>& ids,
                 const std::vector<LabelSequence>& references,
                 const std::vector<LabelSequence>& hypotheses,
                 const Alphabet& alphabet, const SymbolMap* map = nullptr);

/// Best-path decodes every utterance (worker threads when available) and
/// scores in dataset order.
template <typename T>
EvalReport evaluate(const NetworkConfig& config, const ParameterSet<T>& params,
                    const Alphabet& alphabet, const Dataset<T>& data,
                    const SymbolMap* map = nullptr);

/// Best-path decode of one normalized input.
template <typename T>
LabelSequence decode_input(const NetworkConfig& config,
                           const ParameterSet<T>& params,
                           const Tensor<T>& input);

}  // namespace convctc
