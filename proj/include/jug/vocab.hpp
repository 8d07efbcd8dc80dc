#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace jug {

/// Token <-> id map with fixed reserved ids. A closed vocabulary rejects
/// unknown tokens on encode (the formal language); an open one maps them
/// to UNK (natural language).
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;

  explicit Vocabulary(bool closed = false) : closed_(closed) {
    for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>"}) add(t);
  }

  std::size_t add(const std::string& token) {
    auto it = map_.find(token);
    if (it != map_.end()) return it->second;
    const std::size_t id = tokens_.size();
    tokens_.push_back(token);
    map_.emplace(token, id);
    return id;
  }

  bool contains(const std::string& token) const { return map_.count(token) != 0; }
  bool closed() const { return closed_; }
  std::size_t size() const { return tokens_.size(); }

  std::size_t encode_token(const std::string& token) const {
    auto it = map_.find(token);
    if (it != map_.end()) return it->second;
    if (closed_) throw DataError("closed vocabulary: unknown token '" + token + "'");
    return kUnk;
  }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(encode_token(t));
    return ids;
  }

  const std::string& decode_token(std::size_t id) const {
    if (id >= tokens_.size()) throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(decode_token(id));
    return out;
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> map_;
  bool closed_;
};

}  // namespace jug
