#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "ltv/network.hpp"
#include "ltv/train.hpp"

namespace ltv::drnn {

// Versioned text model format ("ltv-drnn-model 1"). Header lines are
// whitespace-separated key/value records describing the topology; each
// parameter array follows as "array <name> <count>" and one line with the
// values in %.17g, which round-trips doubles exactly. The file ends with "end".
struct ModelFile {
  NetworkSpec spec;
  NetworkParams params;
};

void write_model(std::ostream& out, const NetworkSpec& spec, const NetworkParams& params);
ModelFile read_model(std::istream& in);
void save_model(const std::string& path, const NetworkSpec& spec, const NetworkParams& params);
ModelFile load_model(const std::string& path);

// Topology JSON: {"blocks": [{"shortcut": bool, "layers": [{"cell": "drnn",
// "dilation": 1, "n_y": 12, "n_h": 6}, ...]}, ...], "embedding_dims": [3],
// "input_dim": 3, "output_dim": 4}. input_dim, output_dim and embedding
// vocabularies may be left out and filled in from the data.
NetworkSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const NetworkSpec& spec);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

}  // namespace ltv::drnn
