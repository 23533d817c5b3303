#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pfi/optim.hpp"
#include "pfi/rng.hpp"
#include "pfi/tensor.hpp"
#include "pfi/vocabulary.hpp"

namespace pfi {

struct ModelConfig {
  int vocab_size = 300;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int max_seq_len = 64;
  int n_sentinels = 48;

  void validate() const;  // ContractViolation on a bad geometry
  bool operator==(const ModelConfig&) const = default;
};

enum class DecodeMode { kGreedy, kSample };

// Encoder-decoder transformer: learned absolute position embeddings,
// pre-norm blocks, ReLU feed-forward, token embedding tied with the output
// projection. Parameters live in a name -> Tensor map so the optimizer,
// checkpointing and checksums can treat the model uniformly.
class TransformerLM {
 public:
  TransformerLM() = default;
  static TransformerLM init(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  TransformerLM clone() const;  // deep copy of all parameters
  uint64_t checksum() const;
  void zero_grads();
  void set_requires_grad(bool b);
  int64_t parameter_count() const;

  // Logits [len(target), vocab_size]; position t conditions on the full
  // source and target[0..t). InputLengthError when either side exceeds
  // max_seq_len.
  Tensor forward_teacher_forced(Tape& tape, const TokenSeq& source,
                                const TokenSeq& target) const;

  // Mean token-level negative log-likelihood of target given source.
  Tensor sequence_loss(Tape& tape, const TokenSeq& source, const TokenSeq& target) const;

  // Greedy argmax (ties break to the lowest id) or temperature-1 sampling.
  // Generation stops at <eos> (not included in the result) or at max_len.
  TokenSeq generate(const TokenSeq& source, DecodeMode mode, int max_len, Rng& rng) const;

 private:
  ModelConfig config_;
  ParamMap params_;

  Tensor encode(Tape& tape, const TokenSeq& source) const;
  Tensor decode_logits(Tape& tape, const Tensor& enc_out, const TokenSeq& decoder_input) const;
  friend class ModelProbe;
};

// exp(sequence_loss); convenience used by evaluation code.
double perplexity_of_loss(double mean_nll);

}  // namespace pfi
