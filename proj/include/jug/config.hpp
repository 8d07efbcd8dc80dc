#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "model.hpp"
#include "objectives.hpp"

namespace jug {

enum class ObjectiveKind { basic, marginal, semi, decoupled };

inline const char* objective_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::basic: return "basic";
    case ObjectiveKind::marginal: return "marginal";
    case ObjectiveKind::semi: return "semi";
    case ObjectiveKind::decoupled: return "decoupled";
  }
  return "?";
}

/// Full experiment description. Serialises to a flat key=value text file;
/// every field has exactly one key and unknown keys are rejected.
struct ExperimentConfig {
  ObjectiveKind objective = ObjectiveKind::basic;
  MrMode mr_mode = MrMode::slot_value;

  // Data: a deterministic toy grammar or record files.
  std::string data = "toy";  // "toy" | "files"
  std::size_t toy_slots = 5, toy_values = 5, toy_variants = 3;
  std::size_t toy_train = 1600, toy_valid = 200, toy_test = 200;
  std::uint64_t toy_seed = 1;
  std::string data_train, data_valid, data_test;
  bool strip_annotations = true;
  double labelled_fraction = 1.0;
  std::uint64_t split_seed = 1;

  std::uint64_t seed = 1;
  std::size_t d_hidden = 150, d_z = 150, d_embed = 64;
  std::string attention = "bilinear";
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t epochs = 50;
  double kl_anneal_frac = 0.1;
  double clip_norm = 5.0;
  std::size_t decode_cap_x = 60, decode_cap_y = 80;
  std::size_t eval_every = 1;
  std::size_t early_stop_patience = 10;
  std::size_t min_count = 1;
  double baseline_decay = 0.95;
  bool detach_prior = true;
  std::string cascade_prior = "cross";  // "cross" | "normal"
  std::string nlg_eval_z = "sample";    // "sample" | "mean"
  std::string unlabelled_source = "both";  // "both" | "x" | "y" (semi ablation)
  std::string out_dir = "runs";

  JugConfig model_config() const {
    JugConfig c;
    c.d_hidden = d_hidden;
    c.d_z = d_z;
    c.d_embed = d_embed;
    c.mr_mode = mr_mode;
    c.attention = attention == "additive" ? AttentionKind::additive : AttentionKind::bilinear;
    c.decode_cap_x = decode_cap_x;
    c.decode_cap_y = decode_cap_y;
    return c;
  }

  ObjectiveOptions objective_options() const {
    ObjectiveOptions o;
    if (objective == ObjectiveKind::decoupled) o = ObjectiveOptions::decoupled();
    o.detach_prior = detach_prior;
    o.cascade_cross_prior = cascade_prior == "cross";
    return o;
  }

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    m["objective"] = objective_name(objective);
    m["mr_mode"] = mr_mode_name(mr_mode);
    m["data"] = data;
    m["toy_slots"] = std::to_string(toy_slots);
    m["toy_values"] = std::to_string(toy_values);
    m["toy_variants"] = std::to_string(toy_variants);
    m["toy_train"] = std::to_string(toy_train);
    m["toy_valid"] = std::to_string(toy_valid);
    m["toy_test"] = std::to_string(toy_test);
    m["toy_seed"] = std::to_string(toy_seed);
    m["data_train"] = data_train;
    m["data_valid"] = data_valid;
    m["data_test"] = data_test;
    m["strip_annotations"] = strip_annotations ? "true" : "false";
    m["labelled_fraction"] = num(labelled_fraction);
    m["split_seed"] = std::to_string(split_seed);
    m["seed"] = std::to_string(seed);
    m["d_hidden"] = std::to_string(d_hidden);
    m["d_z"] = std::to_string(d_z);
    m["d_embed"] = std::to_string(d_embed);
    m["attention"] = attention;
    m["batch_size"] = std::to_string(batch_size);
    m["lr"] = num(lr);
    m["epochs"] = std::to_string(epochs);
    m["kl_anneal_frac"] = num(kl_anneal_frac);
    m["clip_norm"] = num(clip_norm);
    m["decode_cap_x"] = std::to_string(decode_cap_x);
    m["decode_cap_y"] = std::to_string(decode_cap_y);
    m["eval_every"] = std::to_string(eval_every);
    m["early_stop_patience"] = std::to_string(early_stop_patience);
    m["min_count"] = std::to_string(min_count);
    m["baseline_decay"] = num(baseline_decay);
    m["detach_prior"] = detach_prior ? "true" : "false";
    m["cascade_prior"] = cascade_prior;
    m["nlg_eval_z"] = nlg_eval_z;
    m["unlabelled_source"] = unlabelled_source;
    m["out_dir"] = out_dir;
    return m;
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_map()) os << k << " = " << v << "\n";
    return os.str();
  }

  void set(const std::string& key, const std::string& raw) {
    auto as_bool = [&](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError("config: boolean expected for '" + key + "', got '" + v + "'");
    };
    try {
      if (key == "objective") {
        if (raw == "basic") objective = ObjectiveKind::basic;
        else if (raw == "marginal") objective = ObjectiveKind::marginal;
        else if (raw == "semi") objective = ObjectiveKind::semi;
        else if (raw == "decoupled") objective = ObjectiveKind::decoupled;
        else throw ConfigError("config: unknown objective '" + raw + "'");
      } else if (key == "mr_mode") {
        if (raw == "slot-value") mr_mode = MrMode::slot_value;
        else if (raw == "tree") mr_mode = MrMode::tree;
        else throw ConfigError("config: unknown mr_mode '" + raw + "'");
      } else if (key == "data") {
        if (raw != "toy" && raw != "files") throw ConfigError("config: data must be toy|files");
        data = raw;
      } else if (key == "toy_slots") toy_slots = std::stoul(raw);
      else if (key == "toy_values") toy_values = std::stoul(raw);
      else if (key == "toy_variants") toy_variants = std::stoul(raw);
      else if (key == "toy_train") toy_train = std::stoul(raw);
      else if (key == "toy_valid") toy_valid = std::stoul(raw);
      else if (key == "toy_test") toy_test = std::stoul(raw);
      else if (key == "toy_seed") toy_seed = std::stoull(raw);
      else if (key == "data_train") data_train = raw;
      else if (key == "data_valid") data_valid = raw;
      else if (key == "data_test") data_test = raw;
      else if (key == "strip_annotations") strip_annotations = as_bool(raw);
      else if (key == "labelled_fraction") labelled_fraction = std::stod(raw);
      else if (key == "split_seed") split_seed = std::stoull(raw);
      else if (key == "seed") seed = std::stoull(raw);
      else if (key == "d_hidden") d_hidden = std::stoul(raw);
      else if (key == "d_z") d_z = std::stoul(raw);
      else if (key == "d_embed") d_embed = std::stoul(raw);
      else if (key == "attention") {
        if (raw != "bilinear" && raw != "additive")
          throw ConfigError("config: attention must be bilinear|additive");
        attention = raw;
      } else if (key == "batch_size") batch_size = std::stoul(raw);
      else if (key == "lr") lr = std::stod(raw);
      else if (key == "epochs") epochs = std::stoul(raw);
      else if (key == "kl_anneal_frac") kl_anneal_frac = std::stod(raw);
      else if (key == "clip_norm") clip_norm = std::stod(raw);
      else if (key == "decode_cap_x") decode_cap_x = std::stoul(raw);
      else if (key == "decode_cap_y") decode_cap_y = std::stoul(raw);
      else if (key == "eval_every") eval_every = std::stoul(raw);
      else if (key == "early_stop_patience") early_stop_patience = std::stoul(raw);
      else if (key == "min_count") min_count = std::stoul(raw);
      else if (key == "baseline_decay") baseline_decay = std::stod(raw);
      else if (key == "detach_prior") detach_prior = as_bool(raw);
      else if (key == "cascade_prior") {
        if (raw != "cross" && raw != "normal")
          throw ConfigError("config: cascade_prior must be cross|normal");
        cascade_prior = raw;
      } else if (key == "nlg_eval_z") {
        if (raw != "sample" && raw != "mean")
          throw ConfigError("config: nlg_eval_z must be sample|mean");
        nlg_eval_z = raw;
      } else if (key == "unlabelled_source") {
        if (raw != "both" && raw != "x" && raw != "y")
          throw ConfigError("config: unlabelled_source must be both|x|y");
        unlabelled_source = raw;
      } else if (key == "out_dir") out_dir = raw;
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: bad value '" + raw + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("config: value out of range for key '" + key + "'");
    }
  }

  void validate() const {
    if (!(labelled_fraction > 0.0) || labelled_fraction > 1.0)
      throw ConfigError("config: labelled_fraction must lie in (0, 1]");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
    if (d_hidden == 0 || d_z == 0 || d_embed == 0)
      throw ConfigError("config: dimensions must be positive");
    if (data == "files" && data_train.empty())
      throw ConfigError("config: data=files requires data_train");
    if (objective == ObjectiveKind::semi && data == "toy" && labelled_fraction >= 1.0)
      throw ConfigError("config: objective=semi needs unlabelled pools (labelled_fraction < 1)");
  }
};

inline std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim_ws(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim_ws(t.substr(0, eq)), trim_ws(t.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

/// Resolves a data path against the JUG_DATA_ROOT environment variable.
inline std::string resolve_data_path(const std::string& path) {
  if (path.empty() || path[0] == '/') return path;
  const char* root = std::getenv("JUG_DATA_ROOT");
  if (!root || !*root) return path;
  return std::string(root) + "/" + path;
}

/// Hash of the canonical serialization, out_dir excluded; names run dirs.
inline std::string config_hash(const ExperimentConfig& cfg) {
  auto m = cfg.to_map();
  m.erase("out_dir");
  std::ostringstream os;
  for (const auto& [k, v] : m) os << k << "=" << v << "\n";
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

}  // namespace jug
