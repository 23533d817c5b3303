#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "pfi/errors.hpp"
#include "pfi/injection.hpp"
#include "pfi/optim.hpp"
#include "pfi/tasks.hpp"

using namespace pfi;

namespace {

const Vocabulary& vocab() {
  static Vocabulary v = persona_vocabulary();
  return v;
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = vocab().size();
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.max_seq_len = 48;
  c.n_sentinels = vocab().n_sentinels();
  return c;
}

TransformerLM small_model(uint64_t seed) {
  Rng rng(seed);
  return TransformerLM::init(small_config(), rng);
}

Prompt persona_prompt() {
  const TaskSuite suite = gen_persona_task(3, 1, 1, 5, 2);
  return suite.heldout_prompts[0].prompt;
}

// Masked-LM loss on a fixed set of corruptions; the CP objective's own eval.
double masked_lm_loss(const TransformerLM& model, const TokenSeq& prompt, uint64_t seed) {
  Rng rng(seed);
  Tape tape(Tape::Mode::kNoGrad);
  double total = 0.0;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    const CorruptionExample ex = span_corrupt(prompt, 0.15, vocab(), rng);
    total += model.sequence_loss(tape, ex.corrupted_input, ex.target).item();
  }
  return total / n;
}

}  // namespace

TEST_CASE("zero steps is the identity for every method") {
  TransformerLM model = small_model(1);
  const uint64_t before = model.checksum();
  InjectionConfig cp = InjectionConfig::cp_defaults();
  cp.steps = 0;
  const TransformerLM out = inject_cp(model, persona_prompt(), cp, vocab());
  CHECK(out.checksum() == before);

  TransformerLM teacher = small_model(2);
  TransformerLM generator = small_model(3);
  InjectionConfig ping = InjectionConfig::ping_defaults();
  ping.steps = 0;
  const TransformerLM out2 = inject_ping(model, teacher, generator, persona_prompt(), ping);
  CHECK(out2.checksum() == before);
  CHECK(model.checksum() == before);
}

TEST_CASE("cp injection lowers masked-LM loss on the prompt") {
  TransformerLM model = small_model(4);
  const Prompt prompt = persona_prompt();
  const double before = masked_lm_loss(model, prompt.tokens, 99);
  InjectionConfig cfg = InjectionConfig::cp_defaults();
  cfg.steps = 20;
  cfg.learning_rate = 1e-2;
  cfg.seed = 5;
  const TransformerLM injected = inject_cp(model, prompt, cfg, vocab());
  const double after = masked_lm_loss(injected, prompt.tokens, 99);
  CHECK(after < before);
}

TEST_CASE("injection does not mutate its inputs") {
  TransformerLM student = small_model(6);
  TransformerLM teacher = small_model(7);
  TransformerLM generator = small_model(8);
  const uint64_t s0 = student.checksum(), t0 = teacher.checksum(), g0 = generator.checksum();
  InjectionConfig ping = InjectionConfig::ping_defaults();
  ping.steps = 2;
  ping.pseudo_inputs_per_step = 2;
  ping.learning_rate = 1e-3;
  const TransformerLM out = inject_ping(student, teacher, generator, persona_prompt(), ping);
  CHECK(student.checksum() == s0);
  CHECK(teacher.checksum() == t0);
  CHECK(generator.checksum() == g0);
  CHECK(out.checksum() != s0);
  // gradient never flowed through the frozen models
  for (const auto& [name, p] : teacher.params()) CHECK(!p.has_grad());
  for (const auto& [name, p] : generator.params()) CHECK(!p.has_grad());
}

TEST_CASE("identical seeds give identical injections, different seeds differ") {
  TransformerLM model = small_model(9);
  InjectionConfig cfg = InjectionConfig::cp_defaults();
  cfg.steps = 5;
  cfg.learning_rate = 1e-2;
  cfg.seed = 42;
  const uint64_t a = inject_cp(model, persona_prompt(), cfg, vocab()).checksum();
  const uint64_t b = inject_cp(model, persona_prompt(), cfg, vocab()).checksum();
  CHECK(a == b);
  cfg.seed = 43;
  const uint64_t c = inject_cp(model, persona_prompt(), cfg, vocab()).checksum();
  CHECK(a != c);
}

TEST_CASE("inject_long with one chunk and one epoch equals inject_cp bitwise") {
  TransformerLM model = small_model(10);
  const Prompt prompt = persona_prompt();  // 25 tokens
  InjectionConfig cfg = InjectionConfig::cp_defaults();
  cfg.steps = 4;
  cfg.learning_rate = 1e-2;
  cfg.chunk_len = 40;
  cfg.epochs = 1;
  cfg.seed = 11;
  const uint64_t direct = inject_cp(model, prompt, cfg, vocab()).checksum();
  const uint64_t chunked = inject_long(model, prompt, cfg, vocab()).checksum();
  CHECK(direct == chunked);
}

TEST_CASE("inject_long improves masked-LM loss on every chunk") {
  TransformerLM model = small_model(12);
  const PromptExamples long_pe = gen_persona_prompt(21, 18, "heldout/long-cal");
  Prompt prompt = long_pe.prompt;  // 90 tokens -> 3 chunks of 30
  InjectionConfig cfg = InjectionConfig::cp_defaults();
  cfg.steps = 12;
  cfg.learning_rate = 1e-2;
  cfg.chunk_len = 30;
  cfg.epochs = 2;
  cfg.seed = 13;
  const auto chunks = split_prompt(prompt.tokens, cfg.chunk_len);
  REQUIRE(chunks.size() == 3);
  std::vector<double> before;
  for (const auto& chunk : chunks) before.push_back(masked_lm_loss(model, chunk, 7));
  const TransformerLM injected = inject_long(model, prompt, cfg, vocab());
  for (size_t i = 0; i < chunks.size(); ++i)
    CHECK(masked_lm_loss(injected, chunks[i], 7) < before[i]);
}

TEST_CASE("ping with equal models and empty prompt is a no-op") {
  TransformerLM model = small_model(14);
  TransformerLM teacher = model.clone();
  TransformerLM generator = small_model(15);
  Prompt empty{"empty", {}};
  InjectionConfig cfg = InjectionConfig::ping_defaults();
  cfg.steps = 1;
  cfg.pseudo_inputs_per_step = 4;
  const uint64_t before = model.checksum();
  const TransformerLM out = inject_ping(model, teacher, generator, empty, cfg);
  CHECK(out.checksum() == before);
}

TEST_CASE("ping reduces the distillation KL against fresh pseudo-inputs") {
  TransformerLM student = small_model(16);
  TransformerLM teacher = small_model(17);
  TransformerLM generator = small_model(18);
  const Prompt prompt = persona_prompt();
  InjectionConfig cfg = InjectionConfig::ping_defaults();
  cfg.steps = 30;
  cfg.pseudo_inputs_per_step = 4;
  cfg.learning_rate = 3e-3;
  cfg.seed = 19;

  auto mean_kl = [&](const TransformerLM& s) {
    Rng rng(777);
    Tape tape(Tape::Mode::kNoGrad);
    double total = 0.0;
    const int n = 8;
    for (int i = 0; i < n; ++i) {
      TokenSeq pseudo = generator.generate(prompt.tokens, DecodeMode::kSample, 8, rng);
      if (pseudo.empty()) pseudo.push_back(0);
      TokenSeq teacher_input = prompt.tokens;
      teacher_input.insert(teacher_input.end(), pseudo.begin(), pseudo.end());
      Rng greedy(0);
      TokenSeq answer = teacher.generate(teacher_input, DecodeMode::kGreedy, 8, greedy);
      answer.push_back(2);
      const Tensor tl = teacher.forward_teacher_forced(tape, teacher_input, answer);
      const Tensor sl = s.forward_teacher_forced(tape, pseudo, answer);
      total += kl_divergence(tape, tl, sl).item();
    }
    return total / n;
  };

  const double before = mean_kl(student);
  const TransformerLM injected = inject_ping(student, teacher, generator, prompt, cfg);
  const double after = mean_kl(injected);
  CHECK(after < before);
}

TEST_CASE("pseudo-input sampling is reproducible, diverse and in-bounds") {
  TransformerLM generator = small_model(20);
  const Prompt prompt = persona_prompt();
  Rng a(31), b(31);
  const auto one_a = sample_pseudo_inputs(generator, prompt, 1, 8, a);
  const auto one_b = sample_pseudo_inputs(generator, prompt, 1, 8, b);
  CHECK(one_a == one_b);

  Rng c(32);
  const auto eight = sample_pseudo_inputs(generator, prompt, 8, 8, c);
  std::set<TokenSeq> distinct(eight.begin(), eight.end());
  CHECK(distinct.size() >= 2);
  for (const auto& seq : eight) {
    CHECK(seq.size() <= 8);
    for (int tok : seq) CHECK(tok < vocab().size());
  }
  Rng d(33);
  CHECK_THROWS_AS(sample_pseudo_inputs(generator, prompt, 0, 8, d), ContractViolation);
}

TEST_CASE("generator training learns and validates") {
  TransformerLM base = small_model(22);
  CHECK_THROWS_AS(train_input_generator(base, {}, {}), ContractViolation);

  const TaskSuite suite = gen_persona_task(23, 4, 1, 3, 4);
  const PromptInputPairs pairs = prompt_input_pairs(suite);
  auto mean_loss = [&](const TransformerLM& m) {
    Tape tape(Tape::Mode::kNoGrad);
    double total = 0.0;
    for (const auto& [z, x] : pairs) {
      TokenSeq tgt = x;
      tgt.push_back(2);
      total += m.sequence_loss(tape, z, tgt).item();
    }
    return total / pairs.size();
  };
  GeneratorTrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 3e-3;
  cfg.seed = 24;
  const double before = mean_loss(base);
  const TransformerLM generator = train_input_generator(base, pairs, cfg);
  CHECK(mean_loss(generator) < before);
}

TEST_CASE("generator overfit to one pair reproduces the input greedily") {
  TransformerLM base = small_model(25);
  const TaskSuite suite = gen_persona_task(26, 1, 1, 3, 1);
  const auto& pe = suite.train_prompts[0];
  PromptInputPairs one{{pe.prompt.tokens, pe.examples[0].input}};
  GeneratorTrainConfig cfg;
  cfg.epochs = 120;
  cfg.learning_rate = 1e-2;
  cfg.seed = 27;
  const TransformerLM generator = train_input_generator(base, one, cfg);
  Rng rng(0);
  const TokenSeq got = generator.generate(pe.prompt.tokens, DecodeMode::kGreedy, 12, rng);
  CHECK(got == pe.examples[0].input);
}

TEST_CASE("ping truncates over-long pseudo-inputs and records a warning") {
  // 44-token prompt + up to 12 pseudo tokens > 48 max_seq_len
  const PromptExamples pe = gen_persona_prompt(28, 8, "heldout/trunc");
  REQUIRE(pe.prompt.tokens.size() == 40);
  TransformerLM student = small_model(29);
  TransformerLM teacher = small_model(30);
  TransformerLM generator = small_model(31);
  InjectionConfig cfg = InjectionConfig::ping_defaults();
  cfg.steps = 2;
  cfg.pseudo_inputs_per_step = 4;
  cfg.max_pseudo_input_len = 12;
  cfg.seed = 32;
  InjectionStats stats;
  inject_ping(student, teacher, generator, pe.prompt, cfg, &stats);
  CHECK(stats.pseudo_input_truncations > 0);
  CHECK(!stats.warnings.empty());
}

TEST_CASE("config validation catches bad fields") {
  const int max_seq = 48;
  InjectionConfig cfg = InjectionConfig::cp_defaults();
  cfg.steps = -1;
  CHECK_THROWS_AS(cfg.validate(max_seq), ContractViolation);
  cfg = InjectionConfig::cp_defaults();
  cfg.chunk_len = 49;
  CHECK_THROWS_AS(cfg.validate(max_seq), ContractViolation);
  cfg = InjectionConfig::cp_curriculum_defaults(0.7, 10);
  cfg.mask_schedule.total_steps = 9;
  CHECK_THROWS_AS(cfg.validate(max_seq), ContractViolation);
  cfg = InjectionConfig::ping_defaults();
  cfg.pseudo_inputs_per_step = 0;
  CHECK_THROWS_AS(cfg.validate(max_seq), ContractViolation);
  InjectionConfig wrong = InjectionConfig::ping_defaults();
  TransformerLM m = small_model(33);
  CHECK_THROWS_AS(inject_cp(m, persona_prompt(), wrong, vocab()), ContractViolation);
  Prompt empty{"e", {}};
  CHECK_THROWS_AS(inject_cp(m, empty, InjectionConfig::cp_defaults(), vocab()),
                  ContractViolation);
}

TEST_CASE("inject_long requires ping context for ping runs") {
  TransformerLM m = small_model(34);
  InjectionConfig cfg = InjectionConfig::ping_defaults();
  cfg.steps = 1;
  CHECK_THROWS_AS(inject_long(m, persona_prompt(), cfg, vocab()), ContractViolation);
}

TEST_CASE("split_prompt covers the prompt exactly") {
  TokenSeq tokens(17, 5);
  const auto chunks = split_prompt(tokens, 5);
  REQUIRE(chunks.size() == 4);
  CHECK(chunks[3].size() == 2);
  size_t total = 0;
  for (const auto& c : chunks) total += c.size();
  CHECK(total == tokens.size());
  CHECK_THROWS_AS(split_prompt(tokens, 0), ContractViolation);
}
