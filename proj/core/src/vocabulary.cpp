#include "pfi/vocabulary.hpp"

#include <sstream>

#include "pfi/errors.hpp"

namespace pfi {

Vocabulary::Vocabulary(const std::vector<std::string>& words, int n_sentinels)
    : n_sentinels_(n_sentinels) {
  if (n_sentinels < 0) throw ContractViolation("vocabulary: negative sentinel count");
  id_to_token_.push_back("<pad>");
  id_to_token_.push_back("<bos>");
  id_to_token_.push_back("<eos>");
  for (int k = 0; k < n_sentinels; ++k)
    id_to_token_.push_back("<extra_" + std::to_string(k) + ">");
  for (const std::string& w : words) {
    if (w.empty()) throw ContractViolation("vocabulary: empty word");
    id_to_token_.push_back(w);
  }
  for (size_t i = 0; i < id_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<int>(i));
    if (!inserted) throw ContractViolation("vocabulary: duplicate token " + id_to_token_[i]);
  }
}

int Vocabulary::sentinel_id(int k) const {
  if (k < 0 || k >= n_sentinels_)
    throw ContractViolation("vocabulary: sentinel index out of range");
  return 3 + k;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end())
    throw ContractViolation("vocabulary: unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw ContractViolation("vocabulary: id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

TokenSeq Vocabulary::tokenize(const std::string& text) const {
  TokenSeq out;
  std::istringstream is(text);
  std::string word;
  while (is >> word) out.push_back(id_of(word));
  return out;
}

TokenSeq Vocabulary::tokenize_lenient(const std::string& text,
                                      std::vector<std::string>* skipped) const {
  TokenSeq out;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    auto it = token_to_id_.find(word);
    if (it != token_to_id_.end())
      out.push_back(it->second);
    else if (skipped)
      skipped->push_back(word);
  }
  return out;
}

std::string Vocabulary::detokenize(const TokenSeq& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_of(ids[i]);
  }
  return out;
}

}  // namespace pfi
