#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cdppo {

using TokenSeq = std::vector<int>;

/// Dense token ids [0, V) with BOS = 0 and EOS = 1. Remaining ids map to
/// single printable symbols a-z, 0-9, then "t<id>".
class Vocab {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kFirstContent = 2;

  explicit Vocab(int size);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  int id(const std::string& token) const;
  bool contains(int id) const { return id >= 0 && id < size(); }
  void check(int id) const;

  std::vector<std::string> to_strings(const TokenSeq& seq) const;
  TokenSeq from_strings(const std::vector<std::string>& tokens) const;
  std::string join(const TokenSeq& seq) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace cdppo
