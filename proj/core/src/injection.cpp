#include "pfi/injection.hpp"

#include <algorithm>
#include <cmath>

#include "pfi/errors.hpp"
#include "pfi/optim.hpp"

namespace pfi {

void Prompt::validate() const {
  if (tokens.empty()) throw ContractViolation("prompt '" + id + "' is empty");
}

InjectionConfig InjectionConfig::cp_defaults() {
  InjectionConfig cfg;
  cfg.method = InjectionMethod::kCP;
  cfg.steps = 20;
  cfg.mask_schedule = {0.15, 0.15, 20};
  return cfg;
}

InjectionConfig InjectionConfig::cp_curriculum_defaults(double end_ratio, int steps) {
  InjectionConfig cfg;
  cfg.method = InjectionMethod::kCPCurriculum;
  cfg.steps = steps;
  cfg.mask_schedule = {0.15, end_ratio, steps};
  return cfg;
}

InjectionConfig InjectionConfig::ping_defaults() {
  InjectionConfig cfg;
  cfg.method = InjectionMethod::kPING;
  cfg.steps = 40;
  return cfg;
}

void InjectionConfig::validate(int max_seq_len) const {
  if (steps < 0) throw ContractViolation("injection config: negative steps");
  if (learning_rate <= 0.0) throw ContractViolation("injection config: learning_rate must be positive");
  if (batch_size < 1) throw ContractViolation("injection config: batch_size must be >= 1");
  if (chunk_len < 1 || chunk_len > max_seq_len)
    throw ContractViolation("injection config: chunk_len must lie in [1, max_seq_len]");
  if (epochs < 1) throw ContractViolation("injection config: epochs must be >= 1");
  if (method == InjectionMethod::kCPCurriculum) {
    mask_schedule.validate();
    if (steps > 0 && mask_schedule.total_steps != steps)
      throw ContractViolation("injection config: curriculum total_steps must equal steps");
  }
  if (method == InjectionMethod::kPING) {
    if (pseudo_inputs_per_step < 1)
      throw ContractViolation("injection config: pseudo_inputs_per_step must be >= 1");
    if (max_pseudo_input_len < 1)
      throw ContractViolation("injection config: max_pseudo_input_len must be >= 1");
  }
}

namespace {

double cp_mask_ratio(const InjectionConfig& cfg, int step) {
  if (cfg.method == InjectionMethod::kCPCurriculum)
    return curriculum_ratio(cfg.mask_schedule, step);
  return cfg.mask_schedule.start_ratio;
}

// One CP pass over a single chunk; model is updated in place.
void run_cp_steps(TransformerLM& model, const TokenSeq& chunk, const InjectionConfig& cfg,
                  const Vocabulary& vocab, AdamState& opt, Rng& rng,
                  InjectionStats* stats) {
  if (static_cast<int>(chunk.size()) > cfg.chunk_len)
    throw ContractViolation("inject_cp: prompt longer than chunk_len; use inject_long");
  for (int step = 0; step < cfg.steps; ++step) {
    const double ratio = cp_mask_ratio(cfg, step);
    model.zero_grads();
    Tape tape;
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const CorruptionExample ex = span_corrupt(chunk, ratio, vocab, rng);
      total = add(tape, total, model.sequence_loss(tape, ex.corrupted_input, ex.target));
    }
    Tensor loss = scale(tape, total, 1.0 / cfg.batch_size);
    tape.backward(loss);
    adam_step(model.params(), opt);
    if (stats) {
      if (stats->steps_run == 0) stats->first_step_loss = loss.item();
      stats->last_step_loss = loss.item();
      stats->final_mask_ratio = ratio;
      stats->steps_run += 1;
    }
  }
}

TokenSeq concat_seqs(const TokenSeq& a, const TokenSeq& b) {
  TokenSeq out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// One PING pass over a single chunk; student is updated in place.
void run_ping_steps(TransformerLM& student, const TransformerLM& teacher,
                    const TransformerLM& generator, const TokenSeq& chunk,
                    const InjectionConfig& cfg, AdamState& opt, Rng& rng,
                    InjectionStats* stats) {
  const int max_seq = student.config().max_seq_len;
  // Degenerate empty prompt: condition the generator on <pad> alone.
  const TokenSeq gen_source = chunk.empty() ? TokenSeq{0} : chunk;
  for (int step = 0; step < cfg.steps; ++step) {
    student.zero_grads();
    Tape tape;
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < cfg.pseudo_inputs_per_step; ++b) {
      TokenSeq pseudo = generator.generate(gen_source, DecodeMode::kSample,
                                           cfg.max_pseudo_input_len, rng);
      if (pseudo.empty()) pseudo.push_back(0 /* <pad> keeps the input non-empty */);
      // Truncate the pseudo-input, never the prompt, when the pair overflows.
      const int room = max_seq - static_cast<int>(chunk.size());
      if (static_cast<int>(pseudo.size()) > room) {
        pseudo.resize(static_cast<size_t>(std::max(room, 1)));
        if (stats) {
          stats->pseudo_input_truncations += 1;
          if (stats->warnings.empty())
            stats->warnings.push_back("pseudo-input truncated to fit max_seq_len");
        }
      }
      const TokenSeq teacher_input = concat_seqs(chunk, pseudo);
      Rng greedy_rng(0);  // unused by greedy decoding
      TokenSeq answer = teacher.generate(teacher_input, DecodeMode::kGreedy,
                                         max_seq - 1, greedy_rng);
      answer.push_back(2 /* distill the stop decision too */);
      Tape frozen(Tape::Mode::kNoGrad);
      const Tensor teacher_logits =
          teacher.forward_teacher_forced(frozen, teacher_input, answer);
      const Tensor student_logits =
          student.forward_teacher_forced(tape, pseudo, answer);
      total = add(tape, total, kl_divergence(tape, teacher_logits, student_logits));
    }
    Tensor loss = scale(tape, total, 1.0 / cfg.pseudo_inputs_per_step);
    tape.backward(loss);
    adam_step(student.params(), opt);
    if (stats) {
      if (stats->steps_run == 0) stats->first_step_loss = loss.item();
      stats->last_step_loss = loss.item();
      stats->steps_run += 1;
    }
  }
}

}  // namespace

TransformerLM inject_cp(const TransformerLM& model, const Prompt& prompt,
                        const InjectionConfig& cfg, const Vocabulary& vocab,
                        InjectionStats* stats) {
  if (cfg.method != InjectionMethod::kCP && cfg.method != InjectionMethod::kCPCurriculum)
    throw ContractViolation("inject_cp: config method must be CP or CP_CURRICULUM");
  cfg.validate(model.config().max_seq_len);
  prompt.validate();
  TransformerLM out = model.clone();
  AdamState opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  run_cp_steps(out, prompt.tokens, cfg, vocab, opt, rng, stats);
  return out;
}

TransformerLM train_input_generator(const TransformerLM& base,
                                    const PromptInputPairs& task_train,
                                    const GeneratorTrainConfig& cfg) {
  if (task_train.empty())
    throw ContractViolation("train_input_generator: empty training set");
  if (cfg.epochs < 1) throw ContractViolation("train_input_generator: epochs must be >= 1");
  TransformerLM gen = base.clone();
  AdamState opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  std::vector<size_t> order(task_train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    size_t i = 0;
    while (i < order.size()) {
      const size_t batch_end = std::min(order.size(), i + static_cast<size_t>(cfg.batch_size));
      gen.zero_grads();
      Tape tape;
      Tensor total = Tensor::scalar(0.0);
      for (size_t b = i; b < batch_end; ++b) {
        const auto& [prompt_tokens, input_tokens] = task_train[order[b]];
        TokenSeq target = input_tokens;
        target.push_back(2 /* <eos> */);
        total = add(tape, total, gen.sequence_loss(tape, prompt_tokens, target));
      }
      Tensor loss = scale(tape, total, 1.0 / static_cast<double>(batch_end - i));
      tape.backward(loss);
      adam_step(gen.params(), opt);
      i = batch_end;
    }
  }
  return gen;
}

std::vector<TokenSeq> sample_pseudo_inputs(const TransformerLM& generator,
                                           const Prompt& prompt, int n, int max_len,
                                           Rng& rng) {
  if (n < 1) throw ContractViolation("sample_pseudo_inputs: n must be >= 1");
  std::vector<TokenSeq> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(generator.generate(prompt.tokens, DecodeMode::kSample, max_len, rng));
  return out;
}

TransformerLM inject_ping(const TransformerLM& student, const TransformerLM& teacher,
                          const TransformerLM& generator, const Prompt& prompt,
                          const InjectionConfig& cfg, InjectionStats* stats) {
  if (cfg.method != InjectionMethod::kPING)
    throw ContractViolation("inject_ping: config method must be PING");
  cfg.validate(student.config().max_seq_len);
  TransformerLM out = student.clone();
  AdamState opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  run_ping_steps(out, teacher, generator, prompt.tokens, cfg, opt, rng, stats);
  return out;
}

std::vector<TokenSeq> split_prompt(const TokenSeq& tokens, int chunk_len) {
  if (chunk_len < 1) throw ContractViolation("split_prompt: chunk_len must be >= 1");
  std::vector<TokenSeq> chunks;
  for (size_t i = 0; i < tokens.size(); i += static_cast<size_t>(chunk_len)) {
    const size_t end = std::min(tokens.size(), i + static_cast<size_t>(chunk_len));
    chunks.emplace_back(tokens.begin() + static_cast<long>(i),
                        tokens.begin() + static_cast<long>(end));
  }
  return chunks;
}

TransformerLM inject_long(const TransformerLM& model, const Prompt& prompt,
                          const InjectionConfig& cfg, const Vocabulary& vocab,
                          const std::optional<PingContext>& ping_ctx,
                          InjectionStats* stats) {
  cfg.validate(model.config().max_seq_len);
  prompt.validate();
  if (cfg.method == InjectionMethod::kPING) {
    if (!ping_ctx || !ping_ctx->teacher || !ping_ctx->generator)
      throw ContractViolation("inject_long: PING requires a teacher and a generator");
  }
  const std::vector<TokenSeq> chunks = split_prompt(prompt.tokens, cfg.chunk_len);
  TransformerLM out = model.clone();
  AdamState opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const TokenSeq& chunk : chunks) {
      if (cfg.method == InjectionMethod::kPING)
        run_ping_steps(out, *ping_ctx->teacher, *ping_ctx->generator, chunk, cfg, opt,
                       rng, stats);
      else
        run_cp_steps(out, chunk, cfg, vocab, opt, rng, stats);
    }
  }
  return out;
}

}  // namespace pfi
