#pragma once

#include <filesystem>

#include "convctc/network.hpp"
#include "json.hpp"

namespace convctc {

// Network configuration documents:
//
//   {
//     "input": {"channels": 3, "bands": 41},
//     "alphabet_size": 62,
//     "layers": [
//       {"kind": "conv", "maps": 128, "filter": [3, 5], "activation": "maxout",
//        "pieces": 2, "freq_padding": "same"},
//       {"kind": "pool", "size": 3, "step": 3},
//       {"kind": "dropout", "rate": 0.3},
//       {"kind": "dense", "units": 1024, "activation": "maxout", "pieces": 2},
//       ...
//     ],
//     "training": { ... }          // optional, see TrainSettings
//   }
//
// "filter" is [frequency, time]. Activations: linear, relu, prelu, maxout.

NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json network_config_to_json(const NetworkConfig& config);

/// Parses, validates and returns the network part of a config file.
NetworkConfig load_network_config(const std::filesystem::path& path);

/// The whole document, for callers that also read the "training" section.
nlohmann::json load_json_file(const std::filesystem::path& path);

Padding parse_padding(const std::string& text);
Activation parse_activation(const std::string& text);

}  // namespace convctc
