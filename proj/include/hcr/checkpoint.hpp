#pragma once

// JSON checkpoints: the network config plus named, shape-tagged arrays.
//
//   {"format": "hcr-checkpoint", "version": 1,
//    "network": {...},
//    "tensors": [{"name": "encoder.0.weight", "shape": [4, 8], "data": [...]}, ...]}
//
// Values are written with 17 significant digits, so doubles round-trip exactly.

#include "hcr/detail/format.hpp"
#include "hcr/diffnet.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace hcr {

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

inline nlohmann::json to_json(const NetworkConfig& c) {
  return {{"input_dim", c.input_dim},           {"encoder_widths", c.encoder_widths},
          {"feature_dim", c.feature_dim},       {"num_classes", c.num_classes},
          {"projection_dim", c.projection_dim}, {"projection_hidden", c.projection_hidden},
          {"activation", to_string(c.activation)}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_dim = j.at("input_dim").get<Eigen::Index>();
  c.encoder_widths = j.at("encoder_widths").get<std::vector<Eigen::Index>>();
  c.feature_dim = j.at("feature_dim").get<Eigen::Index>();
  c.num_classes = j.at("num_classes").get<Eigen::Index>();
  c.projection_dim = j.at("projection_dim").get<Eigen::Index>();
  c.projection_hidden = j.value("projection_hidden", Eigen::Index{0});
  c.activation = activation_from_string(j.value("activation", std::string(to_string(NetworkConfig{}.activation))));
  c.validate();
  return c;
}

struct Checkpoint {
  NetworkConfig network;
  NetworkParams<double> params;
};

inline void write_checkpoint(std::ostream& os, const NetworkConfig& cfg, const NetworkParams<double>& params) {
  os << "{\"format\": \"hcr-checkpoint\", \"version\": 1,\n \"network\": " << to_json(cfg).dump()
     << ",\n \"tensors\": [";
  bool first = true;
  params.for_each([&](const std::string& name, const auto& t) {
    os << (first ? "\n  " : ",\n  ");
    first = false;
    os << "{\"name\": \"" << name << "\", \"shape\": [" << t.rows() << ", " << t.cols() << "], \"data\": [";
    for (Eigen::Index i = 0; i < t.size(); ++i) os << (i ? ", " : "") << format_real(t.data()[i]);
    os << "]}";
  });
  os << "\n ]}\n";
}

inline void save_checkpoint(const std::string& path, const NetworkConfig& cfg, const NetworkParams<double>& params) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, cfg, params);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", std::string()) != "hcr-checkpoint") throw Error("not an hcr checkpoint");

  Checkpoint ck;
  ck.network = network_config_from_json(j.at("network"));
  std::map<std::string, const nlohmann::json*> tensors;
  for (const auto& t : j.at("tensors")) tensors[t.at("name").get<std::string>()] = &t;

  // Shapes come from the config; the file must agree.
  ck.params = init_params<double>(ck.network, 0);
  ck.params.for_each([&](const std::string& name, auto& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint is missing tensor " + name);
    const auto& entry = *it->second;
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw ShapeMismatch("checkpoint tensor " + name + " has the wrong shape");
    const auto& data = entry.at("data");
    if (static_cast<Eigen::Index>(data.size()) != t.size())
      throw ShapeMismatch("checkpoint tensor " + name + " has the wrong element count");
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = data[static_cast<std::size_t>(i)].template get<double>();
  });
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace hcr
