#pragma once

// JSON form of the training configuration. Every key is optional on input;
// missing keys keep their defaults. Output always carries every key, so a
// written config reproduces the run exactly.

#include "hcr/checkpoint.hpp"
#include "hcr/trainer.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace hcr {

inline const char* to_string(UnsupervisedKind k) {
  switch (k) {
    case UnsupervisedKind::none: return "none";
    case UnsupervisedKind::info_nce: return "info_nce";
    case UnsupervisedKind::pgc: return "pgc";
  }
  return "?";
}

inline UnsupervisedKind unsupervised_kind_from_string(const std::string& s) {
  if (s == "none") return UnsupervisedKind::none;
  if (s == "info_nce") return UnsupervisedKind::info_nce;
  if (s == "pgc") return UnsupervisedKind::pgc;
  throw ConfigError("unknown unsupervised kind '" + s + "' (expected none, info_nce or pgc)");
}

inline const char* to_string(GradientFlow g) { return g == GradientFlow::both ? "both" : "classifier_only"; }

inline GradientFlow gradient_flow_from_string(const std::string& s) {
  if (s == "classifier_only") return GradientFlow::classifier_only;
  if (s == "both") return GradientFlow::both;
  throw ConfigError("unknown gradient flow '" + s + "' (expected classifier_only or both)");
}

inline const char* to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

inline Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::float32;
  if (s == "float64") return Precision::float64;
  throw ConfigError("unknown precision '" + s + "' (expected float32 or float64)");
}

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline nlohmann::json similarity_json(const SimilarityConfig& s) {
  return {{"mu", s.mu}, {"sigma", s.sigma}, {"normalizer", s.normalizer}};
}

inline void read_similarity(const nlohmann::json& j, SimilarityConfig& s) {
  read_if(j, "mu", s.mu);
  read_if(j, "sigma", s.sigma);
  read_if(j, "normalizer", s.normalizer);
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"network", to_json(c.network)},
          {"hcr",
           {{"enabled", c.hcr.enabled},
            {"weight", c.hcr.weight},
            {"gradient_flow", to_string(c.hcr.gradient_flow)},
            {"clamp_eps", c.hcr.clamp_eps},
            {"similarity_g", detail::similarity_json(c.hcr.similarity_g)},
            {"similarity_h", detail::similarity_json(c.hcr.similarity_h)}}},
          {"unsupervised", to_string(c.unsupervised)},
          {"lambda_u", c.lambda_u},
          {"tau", c.tau},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"precision", to_string(c.precision)},
          {"augment",
           {{"jitter_sigma", c.augment.jitter_sigma},
            {"scale_lo", c.augment.scale_lo},
            {"scale_hi", c.augment.scale_hi}}},
          {"diagnostic_rows", c.diagnostic_rows}};
}

/// Overlay the keys present in `j` onto `c`.
inline void apply_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("network")) {
    const auto& n = j.at("network");
    detail::read_if(n, "input_dim", c.network.input_dim);
    detail::read_if(n, "encoder_widths", c.network.encoder_widths);
    detail::read_if(n, "feature_dim", c.network.feature_dim);
    detail::read_if(n, "num_classes", c.network.num_classes);
    detail::read_if(n, "projection_dim", c.network.projection_dim);
    detail::read_if(n, "projection_hidden", c.network.projection_hidden);
    if (n.contains("activation")) c.network.activation = activation_from_string(n.at("activation").get<std::string>());
  }
  if (j.contains("hcr")) {
    const auto& h = j.at("hcr");
    detail::read_if(h, "enabled", c.hcr.enabled);
    detail::read_if(h, "weight", c.hcr.weight);
    detail::read_if(h, "clamp_eps", c.hcr.clamp_eps);
    if (h.contains("gradient_flow")) c.hcr.gradient_flow = gradient_flow_from_string(h.at("gradient_flow").get<std::string>());
    if (h.contains("similarity_g")) detail::read_similarity(h.at("similarity_g"), c.hcr.similarity_g);
    if (h.contains("similarity_h")) detail::read_similarity(h.at("similarity_h"), c.hcr.similarity_h);
  }
  if (j.contains("unsupervised")) c.unsupervised = unsupervised_kind_from_string(j.at("unsupervised").get<std::string>());
  detail::read_if(j, "lambda_u", c.lambda_u);
  detail::read_if(j, "tau", c.tau);
  detail::read_if(j, "learning_rate", c.learning_rate);
  detail::read_if(j, "momentum", c.momentum);
  detail::read_if(j, "batch_size", c.batch_size);
  detail::read_if(j, "epochs", c.epochs);
  detail::read_if(j, "seed", c.seed);
  if (j.contains("precision")) c.precision = precision_from_string(j.at("precision").get<std::string>());
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    detail::read_if(a, "jitter_sigma", c.augment.jitter_sigma);
    detail::read_if(a, "scale_lo", c.augment.scale_lo);
    detail::read_if(a, "scale_hi", c.augment.scale_hi);
  }
  detail::read_if(j, "diagnostic_rows", c.diagnostic_rows);
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace hcr
