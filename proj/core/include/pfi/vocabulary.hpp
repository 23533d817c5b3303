#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace pfi {

using TokenSeq = std::vector<int>;

// Closed word-level vocabulary. Ids are laid out as
//   0 <pad>, 1 <bos>, 2 <eos>, [3 .. 3+n_sentinels) sentinel block,
//   then the words in the order given at construction.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(const std::vector<std::string>& words, int n_sentinels);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int pad_id() const { return 0; }
  int bos_id() const { return 1; }
  int eos_id() const { return 2; }
  int n_sentinels() const { return n_sentinels_; }
  int sentinel_id(int k) const;          // k in [0, n_sentinels)
  bool is_sentinel(int id) const { return id >= 3 && id < 3 + n_sentinels_; }

  bool contains(const std::string& token) const;
  int id_of(const std::string& token) const;  // ContractViolation if unknown
  const std::string& token_of(int id) const;

  // Whitespace split; every word must be in the vocabulary.
  TokenSeq tokenize(const std::string& text) const;
  // Same, but silently drops unknown words (REPL input); dropped words are
  // appended to *skipped when given.
  TokenSeq tokenize_lenient(const std::string& text,
                            std::vector<std::string>* skipped = nullptr) const;
  std::string detokenize(const TokenSeq& ids) const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int n_sentinels_ = 0;
};

}  // namespace pfi
