#include "cdppo/vocab.hpp"

#include <stdexcept>

namespace cdppo {

Vocab::Vocab(int size) {
  if (size < 4) throw std::invalid_argument("vocabulary size must be at least 4");
  tokens_.reserve(static_cast<std::size_t>(size));
  tokens_.push_back("<bos>");
  tokens_.push_back("<eos>");
  const std::string symbols = "abcdefghijklmnopqrstuvwxyz0123456789";
  for (int i = kFirstContent; i < size; ++i) {
    const auto k = static_cast<std::size_t>(i - kFirstContent);
    tokens_.push_back(k < symbols.size() ? std::string(1, symbols[k]) : "t" + std::to_string(i));
  }
  for (int i = 0; i < size; ++i) index_.emplace(tokens_[static_cast<std::size_t>(i)], i);
}

const std::string& Vocab::token(int id) const {
  check(id);
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("unknown token '" + token + "'");
  return it->second;
}

void Vocab::check(int id) const {
  if (!contains(id)) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside [0, " +
                            std::to_string(size()) + ")");
  }
}

std::vector<std::string> Vocab::to_strings(const TokenSeq& seq) const {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (int t : seq) out.push_back(token(t));
  return out;
}

TokenSeq Vocab::from_strings(const std::vector<std::string>& tokens) const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::string Vocab::join(const TokenSeq& seq) const {
  std::string s;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) s += ' ';
    s += token(seq[i]);
  }
  return s;
}

}  // namespace cdppo
