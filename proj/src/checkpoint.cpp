#include "convctc/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "convctc/config_json.hpp"
#include "convctc/tensor_io.hpp"

namespace convctc {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'C', 'K'};

using ojson = nlohmann::ordered_json;

ojson progress_to_json(const TrainingProgress& p) {
  ojson j;
  j["epoch"] = p.epoch;
  j["best_dev_ler"] = p.best_dev_ler ? ojson(*p.best_dev_ler) : ojson(nullptr);
  j["best_epoch"] = p.best_epoch;
  j["evals_since_best"] = p.evals_since_best;
  j["shuffle_rng"] = p.shuffle_rng;
  j["dropout_rng"] = p.dropout_rng;
  j["settings"] = p.settings;
  return j;
}

TrainingProgress progress_from_json(const ojson& j) {
  TrainingProgress p;
  p.epoch = j.at("epoch").get<std::size_t>();
  if (!j.at("best_dev_ler").is_null()) {
    p.best_dev_ler = j.at("best_dev_ler").get<double>();
  }
  p.best_epoch = j.at("best_epoch").get<std::size_t>();
  p.evals_since_best = j.at("evals_since_best").get<std::size_t>();
  p.shuffle_rng = j.at("shuffle_rng").get<std::string>();
  p.dropout_rng = j.at("dropout_rng").get<std::string>();
  p.settings = j.at("settings");
  return p;
}

ojson optimizer_to_json(const OptimizerConfig& c, std::uint64_t step) {
  ojson j;
  j["stage"] = to_string(c.stage);
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["l2"] = c.l2;
  j["clip_norm"] = c.clip_norm;
  j["step"] = step;
  return j;
}

OptimizerConfig optimizer_from_json(const ojson& j, std::uint64_t& step) {
  OptimizerConfig c;
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  step = j.at("step").get<std::uint64_t>();
  return c;
}

template <typename T>
void write_named(std::ostream& os, const std::string& name,
                 const Tensor<T>& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  write_bytes(os, name);
  write_tensor(os, t);
}

template <typename T>
Tensor<T> read_named(std::istream& is, const std::string& expected,
                     const Shape& shape) {
  const std::uint32_t len = read_u32(is);
  if (len > 4096) throw FormatError("checkpoint: implausible tensor name");
  const std::string name = read_bytes(is, len);
  if (name != expected) {
    throw FormatError("checkpoint: expected tensor '" + expected +
                      "', found '" + name + "'");
  }
  Tensor<T> t = read_tensor<T>(is);
  if (t.shape() != shape) {
    throw ShapeError("checkpoint: " + name + " is " + shape_string(t.shape()) +
                     ", config implies " + shape_string(shape));
  }
  return t;
}

struct Header {
  std::uint32_t dtype = 0;
  ojson json;
};

Header read_header(std::istream& is, const std::string& where) {
  const std::string magic = read_bytes(is, 4);
  if (magic != std::string(kMagic, 4)) {
    throw FormatError(where + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  Header h;
  h.dtype = read_u32(is);
  if (h.dtype != 4 && h.dtype != 8) {
    throw FormatError(where + ": bad dtype tag " + std::to_string(h.dtype));
  }
  const std::uint64_t len = read_u64(is);
  if (len > (std::uint64_t{1} << 30)) {
    throw FormatError(where + ": implausible header length");
  }
  try {
    h.json = ojson::parse(read_bytes(is, static_cast<std::size_t>(len)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": header: " + e.what());
  }
  return h;
}

}  // namespace

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("malformed rng state");
  return rng;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const TrainingState<T>& s) {
  check_parameters(s.config, s.params);
  const auto& opt = s.optimizer;
  if (opt.first_moment.size() != s.params.size() ||
      opt.second_moment.size() != s.params.size()) {
    throw ShapeError("optimizer moments do not match the parameter set");
  }

  ojson header;
  header["network"] = network_config_to_json(s.config);
  header["alphabet"] = s.alphabet.symbols();
  header["optimizer"] = optimizer_to_json(opt.config, opt.step);
  header["progress"] = progress_to_json(s.progress);
  const std::string text = header.dump();

  // Write next to the target and rename, so an interrupted save never
  // clobbers the previous checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write(kMagic, 4);
    write_u32(os, kCheckpointVersion);
    write_u32(os, dtype_tag<T>());
    write_u64(os, text.size());
    write_bytes(os, text);
    write_u32(os, static_cast<std::uint32_t>(3 * s.params.size() + 2));
    for (const auto& e : s.params.entries) write_named(os, "param/" + e.name, e.value);
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      write_named(os, "adam_m/" + s.params[i].name, opt.first_moment[i]);
    }
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      write_named(os, "adam_v/" + s.params[i].name, opt.second_moment[i]);
    }
    write_named(os, "stats/mean", s.stats.mean);
    write_named(os, "stats/std", s.stats.stddev);
    if (!os) throw FormatError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
TrainingState<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  const std::string where = path.string();
  const Header h = read_header(is, where);

  TrainingState<T> s;
  try {
    s.config = network_config_from_json(h.json.at("network"));
    s.alphabet = Alphabet::from_symbols(
        h.json.at("alphabet").get<std::vector<std::string>>());
    s.optimizer.config =
        optimizer_from_json(h.json.at("optimizer"), s.optimizer.step);
    s.progress = progress_from_json(h.json.at("progress"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (s.alphabet.size() != s.config.alphabet_size) {
    throw FormatError(where + ": alphabet has " +
                      std::to_string(s.alphabet.size()) +
                      " symbols, network emits " +
                      std::to_string(s.config.alphabet_size));
  }

  const auto shapes = parameter_shapes(s.config);
  const std::uint32_t count = read_u32(is);
  if (count != 3 * shapes.size() + 2) {
    throw FormatError(where + ": expected " +
                      std::to_string(3 * shapes.size() + 2) +
                      " tensors, found " + std::to_string(count));
  }
  for (const auto& ps : shapes) {
    s.params.entries.push_back(
        {ps.name, ps.cls, ps.layer, read_named<T>(is, "param/" + ps.name, ps.shape)});
  }
  for (const auto& ps : shapes) {
    s.optimizer.first_moment.push_back(
        read_named<T>(is, "adam_m/" + ps.name, ps.shape));
  }
  for (const auto& ps : shapes) {
    s.optimizer.second_moment.push_back(
        read_named<T>(is, "adam_v/" + ps.name, ps.shape));
  }
  const Shape stats_shape{kFeatureChannels, s.config.input_bands};
  s.stats.mean = read_named<T>(is, "stats/mean", stats_shape);
  s.stats.stddev = read_named<T>(is, "stats/std", stats_shape);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(where + ": trailing bytes after checkpoint");
  }
  return s;
}

std::uint32_t checkpoint_dtype(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_header(is, path.string()).dtype;
}

#define CONVCTC_INSTANTIATE(T)                                                 \
  template void save_checkpoint<T>(const std::filesystem::path&,               \
                                   const TrainingState<T>&);                   \
  template TrainingState<T> load_checkpoint<T>(const std::filesystem::path&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
