#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lager/annotation_io.hpp"
#include "lager/error.hpp"
#include "lager/features.hpp"
#include "lager/graph.hpp"
#include "lager/manipulations.hpp"
#include "lager/model.hpp"
#include "lager/optim.hpp"

namespace lager {

struct ExperimentConfig {
  // corpus
  std::string train_dir;
  std::string test_dir;
  std::string format = "auto";
  int max_tokens = 512;
  bool synthetic = false;
  std::uint64_t synth_seed = 0;
  int synth_train = 50;
  int synth_test = 200;
  int synth_tokens = 60;
  double synth_left_bias = 0.7;
  // model
  Variant variant = Variant::LagerNearest;
  int f = 4;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5};
  int k = 4;
  double theta = 60.0;
  AngleStart angle_start = AngleStart::Zero;
  RayMode ray_mode = RayMode::Exact;
  EncoderConfig encoder;
  int heads = 4;
  int layers = 1;
  double leaky_slope = 0.2;
  double input_dropout = 0.0;
  ClassifierInput classifier_input = ClassifierInput::GatOutput;
  // optimization
  AdamWConfig optimizer;
  int batch_size = 8;
  int epochs = 20000;
  // evaluation
  std::vector<ManipSpec> manips;
  std::string output_dir;
  bool save_checkpoints = false;
  bool filewise = false;
  int threads = 1;

  void validate() const {
    if (f < 1) throw ParameterError("f must be >= 1");
    if (seeds.empty()) throw ParameterError("seeds must be non-empty");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (!(optimizer.lr > 0)) throw ParameterError("lr must be > 0");
    if (heads < 1) throw ParameterError("heads must be >= 1");
    if (threads < 1) throw ParameterError("threads must be >= 1");
    if (!synthetic && (train_dir.empty() || test_dir.empty()))
      throw ParameterError("train_dir and test_dir are required unless synthetic=true");
    if (variant != Variant::Vanilla) {
      check_k(k);
      if (variant == Variant::LagerAngles) bundle_size(theta);
    }
    encoder.validate();
  }

  GraphSettings graph_settings() const { return {k, theta, angle_start, ray_mode}; }
  int graph_count() const {
    switch (variant) {
      case Variant::Vanilla: return 0;
      case Variant::LagerNearest: return 1;
      case Variant::LagerAngles: return bundle_size(theta);
    }
    return 0;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ParameterError("config key '" + key + "': bad value '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config key '" + key + "': expected true/false, got '" + v + "'");
}

struct ConfigField {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define LAGER_NUM_FIELD(name, member, type)                                                   \
  {name,                                                                                      \
   {[](ExperimentConfig& c, const std::string& v) { c.member = parse_number<type>(name, v); }, \
    [](const ExperimentConfig& c) {                                                          \
      if constexpr (std::is_floating_point_v<type>)                                          \
        return fmt_double(static_cast<double>(c.member));                                    \
      else                                                                                   \
        return std::to_string(c.member);                                                     \
    }}}
#define LAGER_BOOL_FIELD(name, member)                                                   \
  {name,                                                                                 \
   {[](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
    [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define LAGER_STR_FIELD(name, member)                                          \
  {name,                                                                       \
   {[](ExperimentConfig& c, const std::string& v) { c.member = v; },         \
    [](const ExperimentConfig& c) { return std::string(c.member); }}}

// Every key accepted in config files and as --key CLI overrides, in the order
// they are written back out.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      LAGER_STR_FIELD("train_dir", train_dir),
      LAGER_STR_FIELD("test_dir", test_dir),
      {"format",
       {[](ExperimentConfig& c, const std::string& v) {
          parse_annotation_format(v);
          c.format = v;
        },
        [](const ExperimentConfig& c) { return c.format; }}},
      LAGER_NUM_FIELD("max_tokens", max_tokens, int),
      LAGER_BOOL_FIELD("synthetic", synthetic),
      LAGER_NUM_FIELD("synth_seed", synth_seed, std::uint64_t),
      LAGER_NUM_FIELD("synth_train", synth_train, int),
      LAGER_NUM_FIELD("synth_test", synth_test, int),
      LAGER_NUM_FIELD("synth_tokens", synth_tokens, int),
      LAGER_NUM_FIELD("synth_left_bias", synth_left_bias, double),
      {"variant",
       {[](ExperimentConfig& c, const std::string& v) { c.variant = parse_variant(v); },
        [](const ExperimentConfig& c) { return to_string(c.variant); }}},
      LAGER_NUM_FIELD("f", f, int),
      {"seeds",
       {[](ExperimentConfig& c, const std::string& v) {
          c.seeds.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ','))
            c.seeds.push_back(parse_number<std::uint64_t>("seeds", trim(item)));
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.seeds.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.seeds[i]);
          return s;
        }}},
      LAGER_NUM_FIELD("k", k, int),
      LAGER_NUM_FIELD("theta", theta, double),
      {"angle_start",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "zero")
            c.angle_start = AngleStart::Zero;
          else if (v == "theta")
            c.angle_start = AngleStart::Theta;
          else
            throw ParameterError("angle_start must be zero or theta");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.angle_start == AngleStart::Zero ? "zero" : "theta");
        }}},
      {"ray_mode",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "exact")
            c.ray_mode = RayMode::Exact;
          else if (v == "aabb")
            c.ray_mode = RayMode::Aabb;
          else
            throw ParameterError("ray_mode must be exact or aabb");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.ray_mode == RayMode::Exact ? "exact" : "aabb");
        }}},
      {"encoder_mode",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "hashed")
            c.encoder.mode = EncoderMode::Hashed;
          else if (v == "external")
            c.encoder.mode = EncoderMode::External;
          else
            throw ParameterError("encoder_mode must be hashed or external");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.encoder.mode == EncoderMode::Hashed ? "hashed" : "external");
        }}},
      LAGER_NUM_FIELD("d", encoder.d, int),
      LAGER_NUM_FIELD("ngram_min", encoder.ngram_min, int),
      LAGER_NUM_FIELD("ngram_max", encoder.ngram_max, int),
      LAGER_NUM_FIELD("hash_seed", encoder.hash_seed, std::uint64_t),
      LAGER_BOOL_FIELD("include_layout", encoder.include_layout),
      LAGER_NUM_FIELD("normalize_coords_to", encoder.normalize_coords_to, int),
      {"embedding_dir",
       {[](ExperimentConfig& c, const std::string& v) { c.encoder.embedding_dir = v; },
        [](const ExperimentConfig& c) { return c.encoder.embedding_dir.string(); }}},
      LAGER_NUM_FIELD("heads", heads, int),
      LAGER_NUM_FIELD("layers", layers, int),
      LAGER_NUM_FIELD("leaky_slope", leaky_slope, double),
      LAGER_NUM_FIELD("input_dropout", input_dropout, double),
      {"classifier_input",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "gat")
            c.classifier_input = ClassifierInput::GatOutput;
          else if (v == "concat")
            c.classifier_input = ClassifierInput::Concat;
          else
            throw ParameterError("classifier_input must be gat or concat");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.classifier_input == ClassifierInput::GatOutput ? "gat" : "concat");
        }}},
      LAGER_NUM_FIELD("lr", optimizer.lr, double),
      LAGER_NUM_FIELD("beta1", optimizer.beta1, double),
      LAGER_NUM_FIELD("beta2", optimizer.beta2, double),
      LAGER_NUM_FIELD("eps", optimizer.eps, double),
      LAGER_NUM_FIELD("weight_decay", optimizer.weight_decay, double),
      LAGER_NUM_FIELD("batch_size", batch_size, int),
      LAGER_NUM_FIELD("epochs", epochs, int),
      {"manip",
       {[](ExperimentConfig& c, const std::string& v) {
          c.manips.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ';'))
            if (!trim(item).empty()) c.manips.push_back(parse_manip(trim(item)));
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.manips.size(); ++i) s += (i ? ";" : "") + to_string(c.manips[i]);
          return s;
        }}},
      LAGER_STR_FIELD("output_dir", output_dir),
      LAGER_BOOL_FIELD("save_checkpoints", save_checkpoints),
      LAGER_BOOL_FIELD("filewise", filewise),
      LAGER_NUM_FIELD("threads", threads, int),
  };
  return fields;
}

#undef LAGER_NUM_FIELD
#undef LAGER_BOOL_FIELD
#undef LAGER_STR_FIELD

}  // namespace detail

inline bool is_config_key(std::string_view key) {
  for (const auto& [name, _] : detail::config_fields())
    if (name == key) return true;
  return false;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::config_fields())
    if (name == key) {
      field.set(cfg, value);
      return;
    }
  throw ParameterError("unknown config key '" + key + "'");
}

// Flat "key = value" lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  apply_config_text(cfg, detail::read_file(path));
  return cfg;
}

inline std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : detail::config_fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace lager
