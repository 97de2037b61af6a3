#pragma once

// Every configuration struct, its defaults, validation and JSON codec.
// The README key tables are generated from `PipelineConfig{}` serialized here,
// so the documentation and the validator share this one source.

#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "studa/core/errors.hpp"
#include "studa/core/rng.hpp"
#include "studa/synth/types.hpp"

namespace studa {

struct Range {
  double lo = 0, hi = 0;
  bool operator==(const Range&) const = default;
};

struct GeneratorConfig {
  int height = 32, width = 32;
  int min_objects = 3, max_objects = 6;
  Range object_size{7, 14};
  // Target appearance ranges; every target image draws its own style.
  Range hue_shift{-80, 80};
  Range illumination_strength{0.0, 0.45};
  Range texture_frequency{2.0, 7.0};
  double texture_amplitude = 0.12;
  Range noise_sigma{0.0, 0.04};
  std::uint64_t style_seed_offset = 0x5eed;

  struct Split {
    std::string name;
    std::uint64_t seed_begin = 0;
    int count = 0;
    synth::Domain domain = synth::Domain::source;
    bool operator==(const Split&) const = default;
  };
  std::vector<Split> splits = {
      {"source-train", 0, 2000, synth::Domain::source},
      {"source-val", 900000, 200, synth::Domain::source},
      {"target-train", 1000000, 2000, synth::Domain::target},
      {"target-val", 2000000, 200, synth::Domain::target},
  };

  void validate() const {
    auto bad = [](const Range& r) { return !(r.lo <= r.hi); };
    if (height < 32 || width < 32) throw ConfigError("canvas must be at least 32x32");
    if (min_objects < 0 || min_objects > max_objects) throw ConfigError("min_objects > max_objects");
    if (bad(object_size) || object_size.lo < 3) throw ConfigError("object_size range invalid");
    if (object_size.hi * 1.7 >= std::min(height, width)) throw ConfigError("object_size too large for canvas");
    if (bad(hue_shift) || bad(illumination_strength) || bad(texture_frequency) || bad(noise_sigma))
      throw ConfigError("empty style range");
    if (illumination_strength.lo < 0 || illumination_strength.hi > 1)
      throw ConfigError("illumination_strength outside [0,1]");
    if (noise_sigma.lo < 0) throw ConfigError("negative noise_sigma");
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i].count < 0) throw ConfigError("negative count for split " + splits[i].name);
      for (std::size_t j = i + 1; j < splits.size(); ++j) {
        if (splits[i].name == splits[j].name) throw ConfigError("duplicate split " + splits[i].name);
        const auto a0 = splits[i].seed_begin, a1 = a0 + splits[i].count;
        const auto b0 = splits[j].seed_begin, b1 = b0 + splits[j].count;
        if (a0 < b1 && b0 < a1)
          throw ConfigError("seed ranges of " + splits[i].name + " and " + splits[j].name + " overlap");
      }
    }
  }

  const Split& split(const std::string& name) const {
    for (const auto& s : splits)
      if (s.name == name) return s;
    throw ConfigError("unknown split " + name);
  }
};

struct TranslationConfig {
  int style_dim = 8;
  int enc_width = 16;      // first encoder / last decoder stage
  int content_width = 32;  // content code channels (spatial /4)
  int style_width = 16;
  int mlp_width = 32;
  int disc_width = 16;
  int iterations = 2000;
  int batch_size = 2;
  double lr = 1e-3;
  int lr_halve_every = 700;
  double beta1 = 0.5, beta2 = 0.999;
  double weight_decay = 1e-4;
  double w_recon = 10, w_cycle_content = 1, w_cycle_style = 1, w_adv = 1, w_sem = 1;
  bool use_sem = true;
  int log_every = 10;

  void validate() const {
    if (style_dim < 1 || enc_width < 1 || content_width < 1 || style_width < 1 || mlp_width < 1 || disc_width < 1)
      throw ConfigError("translation widths must be positive");
    if (iterations < 0 || batch_size < 1 || lr <= 0 || log_every < 1) throw ConfigError("translation schedule invalid");
  }
};

struct SegmentationConfig {
  int width1 = 16, width2 = 32;
  int iterations = 1000;
  int batch_size = 4;
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int disc_width = 16;
  double disc_lr = 1e-4;
  double disc_beta1 = 0.9, disc_beta2 = 0.99;
  double adv_weight = 1e-3;
  double pseudo_weight = 1.0;
  bool use_adversarial = true;
  int log_every = 10;

  void validate() const {
    if (width1 < 1 || width2 < 1 || disc_width < 1) throw ConfigError("segmentation widths must be positive");
    if (iterations < 0 || batch_size < 1 || lr <= 0 || disc_lr <= 0 || log_every < 1)
      throw ConfigError("segmentation schedule invalid");
    if (adv_weight < 0 || pseudo_weight < 0) throw ConfigError("negative loss weight");
  }
};

struct PseudoLabelConfig {
  int K = 10;
  // r for pseudo-labels produced at round R (consumed by round R+1); the last
  // entry repeats for later rounds.
  std::vector<double> r_schedule = {0.5, 0.6};
  std::optional<double> max_threshold;

  double r_for_round(int round) const {
    return r_schedule.at(std::min<std::size_t>(static_cast<std::size_t>(round), r_schedule.size() - 1));
  }

  void validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (r_schedule.empty()) throw ConfigError("r_schedule empty");
    for (double r : r_schedule)
      if (!(r > 0 && r <= 1)) throw ConfigError("r must lie in (0, 1]");
    if (max_threshold && !(*max_threshold >= 0 && *max_threshold <= 1))
      throw ConfigError("max_threshold must lie in [0, 1]");
  }
};

struct PipelineConfig {
  GeneratorConfig dataset;
  TranslationConfig translation;
  SegmentationConfig pretrain;
  SegmentationConfig source;
  SegmentationConfig target;
  PseudoLabelConfig pseudo;
  std::vector<double> sigma2 = {1.0, 10.0};
  int rounds = 2;  // R_max; rounds 0..R_max run
  std::uint64_t seed = 0;
  bool fine_tune_from_previous = false;

  void validate() const {
    dataset.validate();
    translation.validate();
    pretrain.validate();
    source.validate();
    target.validate();
    pseudo.validate();
    if (sigma2.empty()) throw ConfigError("sigma2 list empty");
    for (double s : sigma2)
      if (!(s > 0)) throw ConfigError("sigma2 entries must be positive");
    if (rounds < 0) throw ConfigError("rounds must be >= 0");
  }
};

// ---- JSON codec -----------------------------------------------------------

inline void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be [lo, hi]");
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}

inline void to_json(nlohmann::json& j, const GeneratorConfig::Split& s) {
  j = {{"name", s.name}, {"seed_begin", s.seed_begin}, {"count", s.count}, {"domain", synth::domain_name(s.domain)}};
}
inline void from_json(const nlohmann::json& j, GeneratorConfig::Split& s) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "name" && it.key() != "seed_begin" && it.key() != "count" && it.key() != "domain")
      throw ConfigError("unknown split key '" + it.key() + "'");
  s.name = j.at("name").get<std::string>();
  s.seed_begin = j.at("seed_begin").get<std::uint64_t>();
  s.count = j.at("count").get<int>();
  const auto d = j.at("domain").get<std::string>();
  if (d != "source" && d != "target") throw ConfigError("split domain must be source or target");
  s.domain = d == "source" ? synth::Domain::source : synth::Domain::target;
}

#define STUDA_FIELDS_GENERATOR(X)                                                                             \
  X(height) X(width) X(min_objects) X(max_objects) X(object_size) X(hue_shift) X(illumination_strength)        \
  X(texture_frequency) X(texture_amplitude) X(noise_sigma) X(style_seed_offset) X(splits)
#define STUDA_FIELDS_TRANSLATION(X)                                                                           \
  X(style_dim) X(enc_width) X(content_width) X(style_width) X(mlp_width) X(disc_width) X(iterations)           \
  X(batch_size) X(lr) X(lr_halve_every) X(beta1) X(beta2) X(weight_decay) X(w_recon) X(w_cycle_content)       \
  X(w_cycle_style) X(w_adv) X(w_sem) X(use_sem) X(log_every)
#define STUDA_FIELDS_SEGMENTATION(X)                                                                          \
  X(width1) X(width2) X(iterations) X(batch_size) X(lr) X(momentum) X(weight_decay) X(poly_power)              \
  X(disc_width) X(disc_lr) X(disc_beta1) X(disc_beta2) X(adv_weight) X(pseudo_weight) X(use_adversarial)       \
  X(log_every)
#define STUDA_FIELDS_PIPELINE(X) \
  X(dataset) X(translation) X(pretrain) X(source) X(target) X(pseudo) X(sigma2) X(rounds) X(seed) X(fine_tune_from_previous)

#define STUDA_TO_JSON_FIELD(f) j[#f] = c.f;
#define STUDA_FROM_JSON_FIELD(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) { STUDA_FIELDS_GENERATOR(STUDA_TO_JSON_FIELD) }
inline void from_json(const nlohmann::json& j, GeneratorConfig& c) { STUDA_FIELDS_GENERATOR(STUDA_FROM_JSON_FIELD) }
inline void to_json(nlohmann::json& j, const TranslationConfig& c) { STUDA_FIELDS_TRANSLATION(STUDA_TO_JSON_FIELD) }
inline void from_json(const nlohmann::json& j, TranslationConfig& c) { STUDA_FIELDS_TRANSLATION(STUDA_FROM_JSON_FIELD) }
inline void to_json(nlohmann::json& j, const SegmentationConfig& c) { STUDA_FIELDS_SEGMENTATION(STUDA_TO_JSON_FIELD) }
inline void from_json(const nlohmann::json& j, SegmentationConfig& c) {
  STUDA_FIELDS_SEGMENTATION(STUDA_FROM_JSON_FIELD)
}

inline void to_json(nlohmann::json& j, const PseudoLabelConfig& c) {
  j = {{"K", c.K}, {"r_schedule", c.r_schedule}, {"max_threshold", nullptr}};
  if (c.max_threshold) j["max_threshold"] = *c.max_threshold;
}
inline void from_json(const nlohmann::json& j, PseudoLabelConfig& c) {
  if (j.contains("K")) j.at("K").get_to(c.K);
  if (j.contains("r_schedule")) j.at("r_schedule").get_to(c.r_schedule);
  if (j.contains("max_threshold")) {
    if (j.at("max_threshold").is_null())
      c.max_threshold.reset();
    else
      c.max_threshold = j.at("max_threshold").get<double>();
  }
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) { STUDA_FIELDS_PIPELINE(STUDA_TO_JSON_FIELD) }
inline void from_json(const nlohmann::json& j, PipelineConfig& c) { STUDA_FIELDS_PIPELINE(STUDA_FROM_JSON_FIELD) }

#undef STUDA_TO_JSON_FIELD
#undef STUDA_FROM_JSON_FIELD

namespace detail {

inline bool same_kind(const nlohmann::json& schema, const nlohmann::json& v) {
  if (schema.is_null()) return v.is_null() || v.is_number();  // optional number
  if (schema.is_boolean()) return v.is_boolean();
  if (schema.is_number_integer() || schema.is_number_unsigned()) return v.is_number_integer() || v.is_number_unsigned();
  if (schema.is_number()) return v.is_number();
  if (schema.is_string()) return v.is_string();
  if (schema.is_array()) return v.is_array();
  if (schema.is_object()) return v.is_object();
  return false;
}

// Checks `user` against `schema` (the serialized defaults): no unknown keys,
// matching JSON kinds. Arrays are checked element-wise against the first
// schema element when both are non-empty.
inline void check_against_schema(const nlohmann::json& schema, const nlohmann::json& user, const std::string& path) {
  if (!same_kind(schema, user))
    throw ConfigError("key '" + path + "' expects " + std::string(schema.type_name()) + ", got " + user.type_name());
  if (schema.is_object()) {
    for (auto it = user.begin(); it != user.end(); ++it) {
      if (!schema.contains(it.key()))
        throw ConfigError("unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
      check_against_schema(schema.at(it.key()), it.value(), path.empty() ? it.key() : path + "." + it.key());
    }
  } else if (schema.is_array() && !schema.empty()) {
    for (std::size_t i = 0; i < user.size(); ++i)
      check_against_schema(schema[0], user[i], path + "[" + std::to_string(i) + "]");
  }
}

inline nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json(text);
  }
}

}  // namespace detail

inline nlohmann::json config_schema() { return nlohmann::json(PipelineConfig{}); }

// Applies `key.sub=value` overrides to a JSON config. Keys must exist in the
// schema; values are parsed as JSON when possible, else taken as strings.
inline void apply_overrides(nlohmann::json& cfg, const std::vector<std::string>& overrides) {
  const auto schema = config_schema();
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not key=value");
    const std::string key = ov.substr(0, eq);
    const nlohmann::json value = detail::parse_override_value(ov.substr(eq + 1));
    const nlohmann::json* s = &schema;
    nlohmann::json* target = &cfg;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!s->is_object() || !s->contains(part)) throw ConfigError("unknown key '" + key + "'");
      s = &s->at(part);
      if (!target->is_object()) *target = nlohmann::json::object();
      target = &(*target)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (!detail::same_kind(*s, value))
      throw ConfigError("key '" + key + "' expects " + std::string(s->type_name()) + ", got " + value.type_name());
    *target = value;
  }
}

inline PipelineConfig parse_config(const nlohmann::json& j) {
  detail::check_against_schema(config_schema(), j, "");
  PipelineConfig c;
  try {
    from_json(j, c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = path.empty() ? nlohmann::json::object() : read_json_file(path);
  apply_overrides(j, overrides);
  return parse_config(j);
}

// Stable hash of a JSON value (dump is key-sorted).
inline std::string json_hash(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace studa
