#include "ltv/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ltv/error.hpp"

namespace ltv::drnn {

namespace {

constexpr const char* kMagic = "ltv-drnn-model";
constexpr int kVersion = 1;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string next_line(std::istream& in, const char* what) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  throw DataError(std::string("model file truncated while reading ") + what);
}

template <typename T>
T expect_value(std::istringstream& ss, const char* key) {
  std::string k;
  T v{};
  if (!(ss >> k) || k != key || !(ss >> v)) {
    throw DataError(std::string("model file: expected '") + key + " <value>'");
  }
  return v;
}

std::istringstream record(std::istream& in, const char* tag) {
  std::istringstream ss(next_line(in, tag));
  std::string t;
  ss >> t;
  if (t != tag) throw DataError("model file: expected '" + std::string(tag) + "', got '" + t + "'");
  return ss;
}

}  // namespace

void write_model(std::ostream& out, const NetworkSpec& spec, const NetworkParams& params) {
  spec.validate();
  params.validate(spec);
  out << kMagic << ' ' << kVersion << '\n';
  out << "input_dim " << spec.input_dim << '\n';
  out << "output_dim " << spec.output_dim << '\n';
  out << "embeddings " << spec.embeddings.size() << '\n';
  for (const auto& e : spec.embeddings) out << "embedding vocab " << e.vocabulary << " dim " << e.dim << '\n';
  out << "blocks " << spec.blocks.size() << '\n';
  for (const auto& b : spec.blocks) {
    out << "block shortcut " << (b.shortcut ? 1 : 0) << " layers " << b.layers.size() << '\n';
    for (const auto& l : b.layers) {
      out << "layer cell " << to_string(l.kind) << " dilation " << l.dilation << " n_y " << l.n_y
          << " n_h " << l.n_h << '\n';
    }
  }
  auto write_array = [&](const std::string& name, std::span<const double> a) {
    out << "array " << name << ' ' << a.size() << '\n';
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i) out << ' ';
      out << format_double(a[i]);
    }
    out << '\n';
  };
  static const char* drnn_gates[] = {"f", "i", "g", "o"};
  static const char* gru_gates[] = {"z", "r", "n"};
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    for (std::size_t g = 0; g < layer.gate_count(); ++g) {
      const std::string gate = layer.kind == CellKind::gru ? gru_gates[g] : drnn_gates[g];
      write_array("layer" + std::to_string(l) + ".W_" + gate, layer.weights[g].values());
      write_array("layer" + std::to_string(l) + ".b_" + gate, layer.biases[g]);
    }
  }
  for (std::size_t e = 0; e < params.embeddings.size(); ++e) {
    write_array("embedding" + std::to_string(e), params.embeddings[e].values());
  }
  write_array("adaptor.W", params.adaptor.values());
  write_array("adaptor.b", params.adaptor_bias);
  out << "end\n";
}

ModelFile read_model(std::istream& in) {
  ModelFile m;
  {
    std::istringstream ss(next_line(in, "header"));
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kMagic) throw DataError("not an ltv-drnn-model file");
    if (version != kVersion) {
      throw DataError("unsupported model version " + std::to_string(version));
    }
  }
  NetworkSpec& spec = m.spec;
  {
    std::istringstream ss(next_line(in, "input_dim"));
    spec.input_dim = expect_value<std::size_t>(ss, "input_dim");
  }
  {
    std::istringstream ss(next_line(in, "output_dim"));
    spec.output_dim = expect_value<std::size_t>(ss, "output_dim");
  }
  std::size_t n_emb = 0;
  {
    std::istringstream ss(next_line(in, "embeddings"));
    n_emb = expect_value<std::size_t>(ss, "embeddings");
  }
  for (std::size_t e = 0; e < n_emb; ++e) {
    auto ss = record(in, "embedding");
    EmbeddingSpec es;
    es.vocabulary = expect_value<std::size_t>(ss, "vocab");
    es.dim = expect_value<std::size_t>(ss, "dim");
    spec.embeddings.push_back(es);
  }
  std::size_t n_blocks = 0;
  {
    std::istringstream ss(next_line(in, "blocks"));
    n_blocks = expect_value<std::size_t>(ss, "blocks");
  }
  for (std::size_t b = 0; b < n_blocks; ++b) {
    auto ss = record(in, "block");
    BlockSpec bs;
    bs.shortcut = expect_value<int>(ss, "shortcut") != 0;
    const auto n_layers = expect_value<std::size_t>(ss, "layers");
    for (std::size_t l = 0; l < n_layers; ++l) {
      auto ls = record(in, "layer");
      LayerSpec layer;
      layer.kind = parse_cell_kind(expect_value<std::string>(ls, "cell"));
      layer.dilation = expect_value<std::size_t>(ls, "dilation");
      layer.n_y = expect_value<std::size_t>(ls, "n_y");
      layer.n_h = expect_value<std::size_t>(ls, "n_h");
      bs.layers.push_back(layer);
    }
    spec.blocks.push_back(std::move(bs));
  }
  spec.validate();
  m.params = NetworkParams::zeros(spec);
  m.params.for_each_array([&](std::span<double> a) {
    auto ss = record(in, "array");
    std::string name;
    std::size_t count = 0;
    ss >> name >> count;
    if (count != a.size()) {
      throw DataError("model array " + name + " has " + std::to_string(count) +
                      " values, expected " + std::to_string(a.size()));
    }
    const std::string values = a.empty() ? std::string() : next_line(in, "array values");
    const char* p = values.data();
    const char* end = values.data() + values.size();
    for (double& x : a) {
      while (p < end && *p == ' ') ++p;
      char* stop = nullptr;
      x = std::strtod(p, &stop);
      if (stop == p) throw DataError("model array " + name + ": malformed number");
      p = stop;
    }
  });
  if (next_line(in, "end") != "end") throw DataError("model file: missing 'end'");
  return m;
}

void save_model(const std::string& path, const NetworkSpec& spec, const NetworkParams& params) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw UsageError("cannot write model file " + path);
    write_model(out, spec, params);
    if (!out) throw UsageError("failed writing model file " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw UsageError("cannot move model file into place at " + path);
  }
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path);
  return read_model(in);
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.input_dim = j.value("input_dim", std::size_t{0});
  s.output_dim = j.value("output_dim", std::size_t{0});
  if (j.contains("embeddings")) {
    for (const auto& e : j.at("embeddings")) {
      s.embeddings.push_back({e.value("vocab", std::size_t{0}), e.at("dim").get<std::size_t>()});
    }
  } else if (j.contains("embedding_dims")) {
    for (const auto& d : j.at("embedding_dims")) s.embeddings.push_back({0, d.get<std::size_t>()});
  }
  if (!j.contains("blocks")) throw UsageError("network spec JSON needs a 'blocks' array");
  for (const auto& b : j.at("blocks")) {
    BlockSpec bs;
    bs.shortcut = b.value("shortcut", false);
    for (const auto& l : b.at("layers")) {
      LayerSpec ls;
      ls.kind = parse_cell_kind(l.value("cell", std::string("drnn")));
      ls.dilation = l.value("dilation", std::size_t{1});
      ls.n_y = l.at("n_y").get<std::size_t>();
      ls.n_h = l.value("n_h", ls.n_y);
      bs.layers.push_back(ls);
    }
    s.blocks.push_back(std::move(bs));
  }
  return s;
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json j;
  j["input_dim"] = spec.input_dim;
  j["output_dim"] = spec.output_dim;
  j["embeddings"] = nlohmann::json::array();
  for (const auto& e : spec.embeddings) j["embeddings"].push_back({{"vocab", e.vocabulary}, {"dim", e.dim}});
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : spec.blocks) {
    nlohmann::json jb;
    jb["shortcut"] = b.shortcut;
    jb["layers"] = nlohmann::json::array();
    for (const auto& l : b.layers) {
      jb["layers"].push_back({{"cell", std::string(to_string(l.kind))},
                              {"dilation", l.dilation},
                              {"n_y", l.n_y},
                              {"n_h", l.n_h}});
    }
    j["blocks"].push_back(jb);
  }
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.patience = j.value("patience", c.patience);
  c.threads = j.value("threads", c.threads);
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},         {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"clip_norm", c.clip_norm}, {"patience", c.patience}};
}

}  // namespace ltv::drnn
