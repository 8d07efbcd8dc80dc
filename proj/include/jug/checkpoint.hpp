#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adam.hpp"
#include "model.hpp"

namespace jug {

/// Checkpoint container, version 1. Layout (little-endian):
///   magic "JUGCKP01", u32 version,
///   meta text (key=value lines: dims, mode, attention, caps),
///   schema blob, natural vocab blob, formal vocab blob,
///   parameter count, then per parameter: name, dims, row-major f64 values,
///   u8 optimizer flag, optimizer step count and per-parameter moments,
///   RNG state string.
/// Strings are u64-length-prefixed byte runs. The surface lexicon is not
/// stored; it is re-derived from the schema (value -> tokenized value).
namespace ckpt {

inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_u8(std::ostream& os, std::uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 1);
  return v;
}

inline std::string get_str(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("checkpoint truncated while reading string");
  return s;
}

inline std::vector<double> get_doubles(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
  if (!is) throw CheckpointError("checkpoint truncated while reading values");
  return v;
}

inline std::string schema_blob(const SlotSchema& schema) {
  std::string out;
  for (const auto& s : schema.slots) {
    out += s.name;
    for (const auto& v : s.values) {
      out += '\x1f';
      out += v;
    }
    out += '\n';
  }
  return out;
}

inline SlotSchema parse_schema_blob(const std::string& blob) {
  SlotSchema schema;
  std::istringstream is(blob);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == '\x1f') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    SlotSchema::Slot slot;
    slot.name = fields.at(0);
    slot.values.assign(fields.begin() + 1, fields.end());
    schema.slots.push_back(std::move(slot));
  }
  return schema;
}

inline std::string vocab_blob(const Vocabulary& v) {
  std::string out;
  for (const auto& t : v.tokens()) {
    out += t;
    out += '\n';
  }
  return out;
}

inline Vocabulary parse_vocab_blob(const std::string& blob, bool closed) {
  Vocabulary v(closed);
  std::istringstream is(blob);
  std::string line;
  std::size_t idx = 0;
  while (std::getline(is, line)) {
    if (idx++ < 4) continue;  // reserved tokens are fixed
    v.add(line);
  }
  return v;
}

}  // namespace ckpt

struct CheckpointMeta {
  JugConfig config;
  std::string extra;  // round-tripped experiment snapshot (informational)
};

inline void save_checkpoint(const std::string& path, JugModel& model,
                            const AdamOptimizer* optimizer, const Rng* rng,
                            const std::string& extra_meta = "") {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint: " + path);
  os.write("JUGCKP01", 8);
  ckpt::put_u32(os, 1);

  const JugConfig& c = model.config();
  std::ostringstream meta;
  meta << "d_hidden=" << c.d_hidden << "\nd_z=" << c.d_z << "\nd_embed=" << c.d_embed
       << "\nmr_mode=" << mr_mode_name(c.mr_mode)
       << "\nattention=" << attention_kind_name(c.attention)
       << "\ndecode_cap_x=" << c.decode_cap_x << "\ndecode_cap_y=" << c.decode_cap_y << "\n";
  ckpt::put_str(os, meta.str());
  ckpt::put_str(os, extra_meta);
  ckpt::put_str(os, ckpt::schema_blob(model.schema()));
  ckpt::put_str(os, ckpt::vocab_blob(model.nat_vocab()));
  ckpt::put_str(os, ckpt::vocab_blob(model.formal_vocab()));

  const auto& entries = model.params().entries();
  ckpt::put_u64(os, entries.size());
  for (const auto& [name, t] : entries) {
    ckpt::put_str(os, name);
    ckpt::put_u64(os, t.shape.size());
    for (std::size_t d : t.shape) ckpt::put_u64(os, d);
    ckpt::put_doubles(os, t.value);
  }

  ckpt::put_u8(os, optimizer ? 1 : 0);
  if (optimizer) {
    ckpt::put_u64(os, optimizer->step_count());
    ckpt::put_u64(os, optimizer->moments().size());
    for (const auto& [name, m] : optimizer->moments()) {
      ckpt::put_str(os, name);
      ckpt::put_doubles(os, m.m);
      ckpt::put_doubles(os, m.v);
    }
  }
  ckpt::put_str(os, rng ? rng->state() : "");
  if (!os) throw CheckpointError("failed writing checkpoint: " + path);
}

struct LoadedCheckpoint {
  JugConfig config;
  std::string extra_meta;
  SlotSchema schema;
  Vocabulary nat{false};
  Vocabulary formal{true};
  std::map<std::string, Tensor> params;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::map<std::string, AdamOptimizer::Moments> moments;
  std::string rng_state;

  /// Reconstructs the model with stored weights.
  JugModel instantiate() const {
    JugModel m(config, schema, nat, formal, /*init_seed=*/0);
    for (auto& [name, t] : m.params().entries()) {
      auto it = params.find(name);
      if (it == params.end()) throw CheckpointError("checkpoint missing parameter: " + name);
      if (it->second.shape != t.shape)
        throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                              shape_str(it->second.shape) + ", model expects " +
                              shape_str(t.shape));
      t.value = it->second.value;
    }
    if (params.size() != m.params().size())
      throw CheckpointError("checkpoint carries " + std::to_string(params.size()) +
                            " parameters, model expects " + std::to_string(m.params().size()));
    return m;
  }
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "JUGCKP01", 8) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  const std::uint32_t version = ckpt::get_u32(is);
  if (version != 1)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  LoadedCheckpoint out;
  const std::string meta = ckpt::get_str(is);
  std::istringstream ms(meta);
  std::string line;
  while (std::getline(ms, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "d_hidden") out.config.d_hidden = std::stoul(v);
    else if (k == "d_z") out.config.d_z = std::stoul(v);
    else if (k == "d_embed") out.config.d_embed = std::stoul(v);
    else if (k == "mr_mode") out.config.mr_mode = v == "tree" ? MrMode::tree : MrMode::slot_value;
    else if (k == "attention")
      out.config.attention = v == "additive" ? AttentionKind::additive : AttentionKind::bilinear;
    else if (k == "decode_cap_x") out.config.decode_cap_x = std::stoul(v);
    else if (k == "decode_cap_y") out.config.decode_cap_y = std::stoul(v);
  }
  out.extra_meta = ckpt::get_str(is);
  out.schema = ckpt::parse_schema_blob(ckpt::get_str(is));
  out.nat = ckpt::parse_vocab_blob(ckpt::get_str(is), false);
  out.formal = ckpt::parse_vocab_blob(ckpt::get_str(is), true);

  const std::uint64_t n_params = ckpt::get_u64(is);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    const std::string name = ckpt::get_str(is);
    const std::uint64_t ndim = ckpt::get_u64(is);
    Shape shape(ndim);
    for (auto& d : shape) d = ckpt::get_u64(is);
    Tensor t(shape, true);
    t.value = ckpt::get_doubles(is);
    if (t.value.size() != numel(shape))
      throw CheckpointError("parameter '" + name + "' value count mismatch");
    out.params.emplace(name, std::move(t));
  }

  out.has_optimizer = ckpt::get_u8(is) != 0;
  if (out.has_optimizer) {
    out.optimizer_step = ckpt::get_u64(is);
    const std::uint64_t n = ckpt::get_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::string name = ckpt::get_str(is);
      AdamOptimizer::Moments m;
      m.m = ckpt::get_doubles(is);
      m.v = ckpt::get_doubles(is);
      out.moments.emplace(name, std::move(m));
    }
  }
  out.rng_state = ckpt::get_str(is);
  if (!is) throw CheckpointError("checkpoint truncated: " + path);
  return out;
}

/// Lexicon re-derived from the schema: each value's surface form is its own
/// token sequence.
inline SurfaceLexicon lexicon_from_schema(const SlotSchema& schema) {
  SurfaceLexicon lex;
  for (const auto& s : schema.slots)
    for (const auto& v : s.values)
      if (v != kNotMention) lex.add(s.name, v, tokenize(v));
  return lex;
}

}  // namespace jug
