#include "convctc/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "convctc/tensor_io.hpp"

namespace convctc {

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  distance += o.distance;
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  return *this;
}

EditCounts levenshtein(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  const std::size_t w = m + 1;
  std::vector<std::size_t> d((n + 1) * w);
  for (std::size_t i = 0; i <= n; ++i) d[i * w] = i;
  for (std::size_t j = 0; j <= m; ++j) d[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = d[(i - 1) * w + j - 1] + (ref[i - 1] != hyp[j - 1]);
      const std::size_t del = d[(i - 1) * w + j] + 1;
      const std::size_t ins = d[i * w + j - 1] + 1;
      d[i * w + j] = std::min({sub, del, ins});
    }
  }
  EditCounts c;
  c.distance = d[n * w + m];
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = d[i * w + j];
    if (i > 0 && j > 0 &&
        here == d[(i - 1) * w + j - 1] + (ref[i - 1] != hyp[j - 1])) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && here == d[(i - 1) * w + j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

SymbolMap SymbolMap::from_text(const std::string& text,
                               const Alphabet& alphabet) {
  SymbolMap map;
  map.target_.resize(alphabet.size());
  for (std::size_t i = 0; i < alphabet.size(); ++i) {
    map.target_[i] = alphabet.symbol(i);
  }
  std::vector<bool> seen(alphabet.size(), false);
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string src, dst, extra;
    if (!(ls >> src) || src.front() == '#') continue;
    const bool has_target = static_cast<bool>(ls >> dst);
    if (ls >> extra) {
      throw FormatError("symbol map line " + std::to_string(lineno) +
                        ": expected '<symbol> [<target>]'");
    }
    if (!alphabet.contains(src)) {
      throw FormatError("symbol map line " + std::to_string(lineno) +
                        ": unknown symbol '" + src + "'");
    }
    const std::size_t k = alphabet.index(src);
    if (k == kBlank) {
      throw FormatError("symbol map line " + std::to_string(lineno) +
                        ": the blank cannot be mapped");
    }
    if (seen[k]) {
      throw FormatError("symbol map line " + std::to_string(lineno) +
                        ": '" + src + "' mapped twice");
    }
    seen[k] = true;
    if (has_target) {
      map.target_[k] = dst;
    } else {
      map.target_[k].reset();
    }
  }
  return map;
}

SymbolMap SymbolMap::load(const std::filesystem::path& path,
                          const Alphabet& alphabet) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open symbol map " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return from_text(ss.str(), alphabet);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> SymbolMap::apply(const LabelSequence& labels,
                                          const Alphabet& alphabet) const {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const std::size_t k : labels) {
    if (target_.empty()) {
      out.push_back(alphabet.symbol(k));
    } else if (k >= target_.size()) {
      throw std::out_of_range("label " + std::to_string(k) +
                              " outside the mapped alphabet");
    } else if (target_[k]) {
      out.push_back(*target_[k]);
    }
  }
  return out;
}

double EvalReport::error_rate() const {
  if (reference_length == 0) return totals.distance == 0 ? 0.0 : 1.0;
  return static_cast<double>(totals.distance) /
         static_cast<double>(reference_length);
}

nlohmann::ordered_json EvalReport::to_json(bool include_utterances) const {
  nlohmann::ordered_json j;
  j["utterances"] = utterances.size();
  j["reference_length"] = reference_length;
  j["distance"] = totals.distance;
  j["substitutions"] = totals.substitutions;
  j["insertions"] = totals.insertions;
  j["deletions"] = totals.deletions;
  j["error_rate"] = error_rate();
  if (include_utterances) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& u : utterances) {
      nlohmann::ordered_json e;
      e["id"] = u.id;
      e["reference"] = u.reference;
      e["hypothesis"] = u.hypothesis;
      e["distance"] = u.edits.distance;
      list.push_back(std::move(e));
    }
    j["per_utterance"] = std::move(list);
  }
  return j;
}

EvalReport score(const std::vector<std::string>& ids,
                 const std::vector<LabelSequence>& references,
                 const std::vector<LabelSequence>& hypotheses,
                 const Alphabet& alphabet, const SymbolMap* map) {
  if (ids.size() != references.size() || ids.size() != hypotheses.size()) {
    throw std::invalid_argument("score: ids, references and hypotheses differ "
                                "in length");
  }
  const SymbolMap identity;
  const SymbolMap& m = map ? *map : identity;
  EvalReport r;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    UtteranceScore u;
    u.id = ids[i];
    u.reference = m.apply(references[i], alphabet);
    u.hypothesis = m.apply(hypotheses[i], alphabet);
    u.edits = levenshtein(u.reference, u.hypothesis);
    r.totals += u.edits;
    r.reference_length += u.reference.size();
    r.utterances.push_back(std::move(u));
  }
  return r;
}

template <typename T>
LabelSequence decode_input(const NetworkConfig& config,
                           const ParameterSet<T>& params,
                           const Tensor<T>& input) {
  const auto pass = network_forward(input, config, params, Mode::inference);
  return best_path_decode(pass.log_probs);
}

template <typename T>
EvalReport evaluate(const NetworkConfig& config, const ParameterSet<T>& params,
                    const Alphabet& alphabet, const Dataset<T>& data,
                    const SymbolMap* map) {
  const std::size_t n = data.size();
  std::vector<LabelSequence> hyps(n);
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);

  // Each worker claims the next unclaimed index; results land in their own
  // slot so the reduction below is in dataset order regardless of timing.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < n; i = next++) {
        hyps[i] = decode_input(config, params, data.items[i].input);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers <= 1) {
    if (n > 0) work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<std::string> ids;
  std::vector<LabelSequence> refs;
  ids.reserve(n);
  refs.reserve(n);
  for (const auto& u : data.items) {
    ids.push_back(u.id);
    refs.push_back(u.labels);
  }
  return score(ids, refs, hyps, alphabet, map);
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template EvalReport evaluate<T>(const NetworkConfig&, const ParameterSet<T>&, \
                                  const Alphabet&, const Dataset<T>&,          \
                                  const SymbolMap*);                           \
  template LabelSequence decode_input<T>(const NetworkConfig&,                 \
                                         const ParameterSet<T>&,               \
                                         const Tensor<T>&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
