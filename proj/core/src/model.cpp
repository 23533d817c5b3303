#include "pfi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfi/errors.hpp"

namespace pfi {

namespace {

// Highest curriculum end ratio the toolkit sweeps; sizes the sentinel block.
constexpr double kMaxMaskRatio = 0.7;

std::string layer_key(const char* stack, int layer, const char* rest) {
  return std::string(stack) + std::to_string(layer) + "." + rest;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 ||
      n_encoder_layers <= 0 || n_decoder_layers <= 0 || max_seq_len <= 0 ||
      n_sentinels < 0)
    throw ContractViolation("model config: all dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ContractViolation("model config: d_model must be divisible by n_heads");
  const int needed = static_cast<int>(std::ceil(kMaxMaskRatio * max_seq_len)) + 1;
  if (n_sentinels < needed)
    throw ContractViolation("model config: n_sentinels too small for max mask ratio (need " +
                            std::to_string(needed) + ")");
  if (vocab_size <= n_sentinels + 3)
    throw ContractViolation("model config: vocab_size must exceed specials + sentinels");
}

TransformerLM TransformerLM::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  TransformerLM model;
  model.config_ = config;
  const int d = config.d_model;
  const int v = config.vocab_size;
  const int ff = config.d_ff;
  const int L = config.max_seq_len;

  auto normal_tensor = [&rng](std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& x : t.values()) x = rng.normal(0.0, 0.02);
    return t;
  };
  auto zeros_tensor = [](std::vector<int> shape) {
    return Tensor::zeros(std::move(shape), true);
  };
  auto ones_tensor = [](std::vector<int> shape) {
    return Tensor::full(std::move(shape), 1.0, true);
  };

  auto& p = model.params_;
  p["tok_emb"] = normal_tensor({v, d});
  p["enc_pos"] = normal_tensor({L, d});
  p["dec_pos"] = normal_tensor({L, d});

  auto add_attention = [&](const std::string& prefix) {
    p[prefix + ".wq"] = normal_tensor({d, d});
    p[prefix + ".wk"] = normal_tensor({d, d});
    p[prefix + ".wv"] = normal_tensor({d, d});
    p[prefix + ".wo"] = normal_tensor({d, d});
  };
  auto add_norm = [&](const std::string& prefix) {
    p[prefix + ".g"] = ones_tensor({d});
    p[prefix + ".b"] = zeros_tensor({d});
  };
  auto add_ffn = [&](const std::string& prefix) {
    p[prefix + ".w1"] = normal_tensor({d, ff});
    p[prefix + ".b1"] = zeros_tensor({ff});
    p[prefix + ".w2"] = normal_tensor({ff, d});
    p[prefix + ".b2"] = zeros_tensor({d});
  };

  for (int i = 0; i < config.n_encoder_layers; ++i) {
    add_norm(layer_key("enc", i, "ln1"));
    add_attention(layer_key("enc", i, "attn"));
    add_norm(layer_key("enc", i, "ln2"));
    add_ffn(layer_key("enc", i, "ffn"));
  }
  for (int i = 0; i < config.n_decoder_layers; ++i) {
    add_norm(layer_key("dec", i, "ln1"));
    add_attention(layer_key("dec", i, "self"));
    add_norm(layer_key("dec", i, "ln2"));
    add_attention(layer_key("dec", i, "cross"));
    add_norm(layer_key("dec", i, "ln3"));
    add_ffn(layer_key("dec", i, "ffn"));
  }
  add_norm("enc_final");
  add_norm("dec_final");
  return model;
}

Tensor& TransformerLM::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("unknown parameter " + name);
  return it->second;
}

const Tensor& TransformerLM::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("unknown parameter " + name);
  return it->second;
}

TransformerLM TransformerLM::clone() const {
  TransformerLM copy;
  copy.config_ = config_;
  for (const auto& [name, t] : params_) copy.params_[name] = t.clone();
  return copy;
}

uint64_t TransformerLM::checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params_) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= t.checksum();
    h *= 0x100000001b3ULL;
  }
  return h;
}

void TransformerLM::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void TransformerLM::set_requires_grad(bool b) {
  for (auto& [name, t] : params_) t.set_requires_grad(b);
}

int64_t TransformerLM::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

namespace {

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(static_cast<size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

// Multi-head attention; kv_in == q_in for self-attention. The causal flag
// masks position j > i with a large negative additive constant.
static Tensor multi_head_attention(Tape& tape, const Tensor& q_in, const Tensor& kv_in,
                                   const ParamMap& p, const std::string& prefix,
                                   int n_heads, bool causal) {
  const Tensor q_all = matmul(tape, q_in, p.at(prefix + ".wq"));
  const Tensor k_all = matmul(tape, kv_in, p.at(prefix + ".wk"));
  const Tensor v_all = matmul(tape, kv_in, p.at(prefix + ".wv"));
  const int d = q_all.dim(1);
  const int dh = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const int m = q_all.dim(0);
  const int n = k_all.dim(0);

  std::vector<double> mask;
  if (causal) {
    mask.assign(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < n; ++j) mask[static_cast<size_t>(i) * n + j] = -1e30;
  }

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const Tensor qh = slice_cols(tape, q_all, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(tape, k_all, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(tape, v_all, h * dh, (h + 1) * dh);
    Tensor scores = scale(tape, matmul_bt(tape, qh, kh), inv_sqrt_dh);
    if (causal) scores = add_mask(tape, scores, mask);
    const Tensor probs = softmax_rows(tape, scores);
    heads.push_back(matmul(tape, probs, vh));
  }
  const Tensor ctx = concat_cols(tape, heads);
  return matmul(tape, ctx, p.at(prefix + ".wo"));
}

static Tensor ffn_block(Tape& tape, const Tensor& x, const ParamMap& p,
                        const std::string& prefix) {
  Tensor h = add_row_broadcast(tape, matmul(tape, x, p.at(prefix + ".w1")),
                               p.at(prefix + ".b1"));
  h = relu(tape, h);
  return add_row_broadcast(tape, matmul(tape, h, p.at(prefix + ".w2")),
                           p.at(prefix + ".b2"));
}

static Tensor norm(Tape& tape, const Tensor& x, const ParamMap& p,
                   const std::string& prefix) {
  return layer_norm_rows(tape, x, p.at(prefix + ".g"), p.at(prefix + ".b"));
}

Tensor TransformerLM::encode(Tape& tape, const TokenSeq& source) const {
  if (source.empty()) throw ContractViolation("encode: empty source");
  if (static_cast<int>(source.size()) > config_.max_seq_len)
    throw InputLengthError("source length " + std::to_string(source.size()) +
                           " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  const Tensor tok = embedding_lookup(tape, params_.at("tok_emb"), source);
  const Tensor pos = embedding_lookup(tape, params_.at("enc_pos"),
                                      iota_ids(static_cast<int>(source.size())));
  Tensor x = add(tape, tok, pos);
  for (int i = 0; i < config_.n_encoder_layers; ++i) {
    const Tensor h1 = norm(tape, x, params_, layer_key("enc", i, "ln1"));
    x = add(tape, x, multi_head_attention(tape, h1, h1, params_,
                                          layer_key("enc", i, "attn"),
                                          config_.n_heads, /*causal=*/false));
    const Tensor h2 = norm(tape, x, params_, layer_key("enc", i, "ln2"));
    x = add(tape, x, ffn_block(tape, h2, params_, layer_key("enc", i, "ffn")));
  }
  return norm(tape, x, params_, "enc_final");
}

Tensor TransformerLM::decode_logits(Tape& tape, const Tensor& enc_out,
                                    const TokenSeq& decoder_input) const {
  if (decoder_input.empty()) throw ContractViolation("decode: empty decoder input");
  if (static_cast<int>(decoder_input.size()) > config_.max_seq_len)
    throw InputLengthError("target length " + std::to_string(decoder_input.size()) +
                           " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  const Tensor tok = embedding_lookup(tape, params_.at("tok_emb"), decoder_input);
  const Tensor pos = embedding_lookup(tape, params_.at("dec_pos"),
                                      iota_ids(static_cast<int>(decoder_input.size())));
  Tensor x = add(tape, tok, pos);
  for (int i = 0; i < config_.n_decoder_layers; ++i) {
    const Tensor h1 = norm(tape, x, params_, layer_key("dec", i, "ln1"));
    x = add(tape, x, multi_head_attention(tape, h1, h1, params_,
                                          layer_key("dec", i, "self"),
                                          config_.n_heads, /*causal=*/true));
    const Tensor h2 = norm(tape, x, params_, layer_key("dec", i, "ln2"));
    x = add(tape, x, multi_head_attention(tape, h2, enc_out, params_,
                                          layer_key("dec", i, "cross"),
                                          config_.n_heads, /*causal=*/false));
    const Tensor h3 = norm(tape, x, params_, layer_key("dec", i, "ln3"));
    x = add(tape, x, ffn_block(tape, h3, params_, layer_key("dec", i, "ffn")));
  }
  x = norm(tape, x, params_, "dec_final");
  // Output projection tied to the token embedding.
  return matmul_bt(tape, x, params_.at("tok_emb"));
}

Tensor TransformerLM::forward_teacher_forced(Tape& tape, const TokenSeq& source,
                                             const TokenSeq& target) const {
  if (target.empty()) throw ContractViolation("forward_teacher_forced: empty target");
  const Tensor enc_out = encode(tape, source);
  TokenSeq decoder_input;
  decoder_input.reserve(target.size());
  decoder_input.push_back(1 /* <bos> */);
  decoder_input.insert(decoder_input.end(), target.begin(), target.end() - 1);
  return decode_logits(tape, enc_out, decoder_input);
}

Tensor TransformerLM::sequence_loss(Tape& tape, const TokenSeq& source,
                                    const TokenSeq& target) const {
  if (target.empty()) throw ContractViolation("sequence_loss: empty target");
  const Tensor logits = forward_teacher_forced(tape, source, target);
  return cross_entropy_mean(tape, logits, target);
}

TokenSeq TransformerLM::generate(const TokenSeq& source, DecodeMode mode, int max_len,
                                 Rng& rng) const {
  if (max_len < 0) throw ContractViolation("generate: negative max_len");
  TokenSeq out;
  if (max_len == 0) return out;
  Tape tape(Tape::Mode::kNoGrad);
  const Tensor enc_out = encode(tape, source);
  // The decoder holds <bos> plus generated tokens, so its capacity bounds
  // the output at max_seq_len tokens.
  const int cap = std::min(max_len, config_.max_seq_len);
  TokenSeq decoder_input{1 /* <bos> */};
  for (int step = 0; step < cap; ++step) {
    const Tensor logits = decode_logits(tape, enc_out, decoder_input);
    const int v = logits.dim(1);
    const double* row = logits.data() + static_cast<int64_t>(logits.dim(0) - 1) * v;
    int next = 0;
    if (mode == DecodeMode::kGreedy) {
      for (int j = 1; j < v; ++j)
        if (row[j] > row[next]) next = j;
    } else {
      double mx = row[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      std::vector<double> probs(static_cast<size_t>(v));
      for (int j = 0; j < v; ++j) {
        probs[static_cast<size_t>(j)] = std::exp(row[j] - mx);
        sum += probs[static_cast<size_t>(j)];
      }
      double r = rng.uniform01() * sum;
      double acc = 0.0;
      next = v - 1;
      for (int j = 0; j < v; ++j) {
        acc += probs[static_cast<size_t>(j)];
        if (r < acc) {
          next = j;
          break;
        }
      }
    }
    if (next == 2 /* <eos> */) break;
    out.push_back(next);
    if (static_cast<int>(decoder_input.size()) == config_.max_seq_len) break;
    decoder_input.push_back(next);
  }
  return out;
}

double perplexity_of_loss(double mean_nll) { return std::exp(mean_nll); }

}  // namespace pfi
