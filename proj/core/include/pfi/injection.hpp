#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfi/corruption.hpp"
#include "pfi/model.hpp"

namespace pfi {

// The fixed conditioning text to be stored in model parameters. May exceed
// max_seq_len; long prompts are split into sub-prompts by inject_long.
struct Prompt {
  std::string id;
  TokenSeq tokens;

  void validate() const;  // non-empty
};

enum class InjectionMethod { kCP, kCPCurriculum, kPING };

struct InjectionConfig {
  InjectionMethod method = InjectionMethod::kCP;
  int steps = 20;               // documented defaults: CP 5-20, PING 10-40
  double learning_rate = 1e-4;
  int batch_size = 8;
  CurriculumSchedule mask_schedule;   // CP variants
  int pseudo_inputs_per_step = 8;     // PING
  int max_pseudo_input_len = 8;       // PING
  int chunk_len = 40;                 // sub-prompt length for inject_long
  int epochs = 1;                     // long-prompt outer loop
  uint64_t seed = 0;

  static InjectionConfig cp_defaults();
  static InjectionConfig cp_curriculum_defaults(double end_ratio, int steps);
  static InjectionConfig ping_defaults();

  // max_seq_len of the model the config will drive.
  void validate(int max_seq_len) const;
};

// Side-channel counters filled by an injection run when requested.
struct InjectionStats {
  int steps_run = 0;
  int pseudo_input_truncations = 0;
  double first_step_loss = 0.0;
  double last_step_loss = 0.0;
  double final_mask_ratio = 0.0;  // CP variants
  std::vector<std::string> warnings;
};

// Continued pre-training: per step, batch_size fresh span corruptions of the
// prompt at the scheduled mask ratio (fixed at start_ratio for plain CP) and
// one Adam step on the corrupted-input -> spans loss. The input model is
// never mutated; a new model is returned. steps == 0 returns a bitwise copy.
TransformerLM inject_cp(const TransformerLM& model, const Prompt& prompt,
                        const InjectionConfig& cfg, const Vocabulary& vocab,
                        InjectionStats* stats = nullptr);

// Phase-1 of PING: trains a prompt -> task-input generator with teacher
// forcing over every (prompt, input) pair of the training split.
struct GeneratorTrainConfig {
  int epochs = 2;  // documented default range 1-2
  double learning_rate = 1e-3;
  int batch_size = 8;
  uint64_t seed = 0;
};

// (prompt tokens, task input tokens) pairs; see tasks.hpp for the extractor.
using PromptInputPairs = std::vector<std::pair<TokenSeq, TokenSeq>>;

TransformerLM train_input_generator(const TransformerLM& base,
                                    const PromptInputPairs& task_train,
                                    const GeneratorTrainConfig& cfg);

// Draws n pseudo-inputs from the generator by temperature-1 sampling.
std::vector<TokenSeq> sample_pseudo_inputs(const TransformerLM& generator,
                                           const Prompt& prompt, int n, int max_len,
                                           Rng& rng);

// Phase-2 of PING: per step, sample pseudo-inputs, let the frozen teacher
// greedily answer concat(prompt, x) and distill its teacher-forced logits
// into the student, which sees only x. Gradient flows through the student
// alone; teacher and generator stay bitwise unchanged.
TransformerLM inject_ping(const TransformerLM& student, const TransformerLM& teacher,
                          const TransformerLM& generator, const Prompt& prompt,
                          const InjectionConfig& cfg, InjectionStats* stats = nullptr);

struct PingContext {
  const TransformerLM* teacher = nullptr;
  const TransformerLM* generator = nullptr;
};

// Sequential sub-prompt injection: splits the prompt into chunks of at most
// chunk_len tokens and, for each epoch, applies the configured single-chunk
// method to every chunk in order, threading the evolving model through.
// With one chunk and one epoch this equals the single-chunk method bitwise.
TransformerLM inject_long(const TransformerLM& model, const Prompt& prompt,
                          const InjectionConfig& cfg, const Vocabulary& vocab,
                          const std::optional<PingContext>& ping_ctx = std::nullopt,
                          InjectionStats* stats = nullptr);

// Chunk boundaries used by inject_long (exposed for evaluation code).
std::vector<TokenSeq> split_prompt(const TokenSeq& tokens, int chunk_len);

}  // namespace pfi
