#include "convctc/config_json.hpp"

#include <fstream>

#include "convctc/tensor_io.hpp"

namespace convctc {

Padding parse_padding(const std::string& text) {
  if (text == "same") return Padding::same;
  if (text == "valid") return Padding::valid;
  throw std::invalid_argument("unknown padding '" + text + "' (same|valid)");
}

Activation parse_activation(const std::string& text) {
  if (text == "linear") return Activation::linear;
  if (text == "relu") return Activation::relu;
  if (text == "prelu") return Activation::prelu;
  if (text == "maxout") return Activation::maxout;
  throw std::invalid_argument("unknown activation '" + text +
                              "' (linear|relu|prelu|maxout)");
}

namespace {

LayerConfig layer_from_json(const nlohmann::json& j, std::size_t index) {
  LayerConfig l;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "conv") {
    l.kind = LayerKind::conv;
    l.width = j.at("maps").get<std::size_t>();
    const auto filter = j.at("filter");
    if (!filter.is_array() || filter.size() != 2) {
      throw std::invalid_argument("conv filter must be [freq, time]");
    }
    l.filter_freq = filter[0].get<std::size_t>();
    l.filter_time = filter[1].get<std::size_t>();
    l.freq_padding = parse_padding(j.value("freq_padding", "same"));
    l.activation = parse_activation(j.value("activation", "maxout"));
    l.pieces = j.value("pieces", std::size_t{2});
  } else if (kind == "pool") {
    l.kind = LayerKind::pool;
    l.pool_size = j.at("size").get<std::size_t>();
    l.pool_step = j.value("step", l.pool_size);
  } else if (kind == "dense") {
    l.kind = LayerKind::dense;
    l.width = j.at("units").get<std::size_t>();
    l.activation = parse_activation(j.value("activation", "maxout"));
    l.pieces = j.value("pieces", std::size_t{2});
  } else if (kind == "dropout") {
    l.kind = LayerKind::dropout;
    l.rate = j.at("rate").get<double>();
  } else {
    throw std::invalid_argument("layer " + std::to_string(index) +
                                ": unknown kind '" + kind + "'");
  }
  return l;
}

}  // namespace

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    const auto& input = j.at("input");
    c.input_channels = input.at("channels").get<std::size_t>();
    c.input_bands = input.at("bands").get<std::size_t>();
    c.alphabet_size = j.at("alphabet_size").get<std::size_t>();
    const auto& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      c.layers.push_back(layer_from_json(layers[i], i));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json network_config_to_json(const NetworkConfig& c) {
  nlohmann::ordered_json j;
  j["input"] = {{"channels", c.input_channels}, {"bands", c.input_bands}};
  j["alphabet_size"] = c.alphabet_size;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : c.layers) {
    nlohmann::ordered_json e;
    e["kind"] = to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv:
        e["maps"] = l.width;
        e["filter"] = {l.filter_freq, l.filter_time};
        e["freq_padding"] = l.freq_padding == Padding::same ? "same" : "valid";
        e["activation"] = to_string(l.activation);
        if (l.activation == Activation::maxout) e["pieces"] = l.pieces;
        break;
      case LayerKind::pool:
        e["size"] = l.pool_size;
        e["step"] = l.pool_step;
        break;
      case LayerKind::dense:
        e["units"] = l.width;
        e["activation"] = to_string(l.activation);
        if (l.activation == Activation::maxout) e["pieces"] = l.pieces;
        break;
      case LayerKind::dropout:
        e["rate"] = l.rate;
        break;
    }
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j;
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

NetworkConfig load_network_config(const std::filesystem::path& path) {
  try {
    return network_config_from_json(load_json_file(path));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace convctc
