#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfi/injection.hpp"
#include "pfi/model.hpp"
#include "pfi/vocabulary.hpp"

namespace pfi {

struct TaskExample {
  TokenSeq input;   // x
  TokenSeq output;  // y
};

enum class TaskMetric { kExactMatch, kPerplexity };
enum class MetricDirection { kHigherBetter, kLowerBetter };

struct PromptExamples {
  Prompt prompt;
  std::vector<TaskExample> examples;
};

// A synthetic prompt-dependent task: training prompts with examples for
// fine-tuning the bounds and the generator, held-out prompts whose examples
// form the injection-free test set.
struct TaskSuite {
  std::string name;
  TaskMetric metric = TaskMetric::kExactMatch;
  MetricDirection direction = MetricDirection::kHigherBetter;
  std::vector<PromptExamples> train_prompts;
  std::vector<PromptExamples> heldout_prompts;

  void validate() const;  // id disjointness, non-empty fields
};

// ---- canonical vocabularies -------------------------------------------------
// Each task family owns a closed vocabulary that is independent of the
// generation parameters, so any suite or extra prompt drawn from the same
// pools tokenizes against the same ids (and checkpoints stay compatible).

constexpr int kTaskSentinels = 48;

Vocabulary persona_vocabulary();
Vocabulary schema_vocabulary();
Vocabulary instruction_vocabulary();
Vocabulary vocabulary_for_task(const std::string& task_name);

// ---- generators --------------------------------------------------------------

// Personas are attribute -> value fact sets rendered as sentences
// ("my hobby is chess ."); inputs are templated questions ("what is your
// hobby ?") and outputs are the bare values. Every attribute owns a disjoint
// 12-value pool. The core pool (12 attributes) keeps desk-scale fine-tuning
// fast; the extended pool (40) backs long-persona runs.
enum class PersonaPool { kCore, kExtended };

TaskSuite gen_persona_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                           int facts_per_persona, int examples_per_prompt,
                           PersonaPool pool = PersonaPool::kCore);

// One standalone persona prompt with a question per fact; used for the
// long-prompt runs where the persona exceeds the model's input length.
PromptExamples gen_persona_prompt(uint64_t seed, int n_facts, const std::string& id);

// Toy schemas: table/column concepts bound to internal identifiers by the
// prompt; questions reference concepts, gold queries reference identifiers,
// so the answer is unrecoverable without the schema.
TaskSuite gen_schema_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                          int tables_per_schema, int examples_per_prompt);

// Zero-shot instruction variant: the prompt fixes a containment rule
// ("... answer yes if the text has <w> ..."); outputs are two labels.
TaskSuite gen_instruction_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                               int words_per_input, int examples_per_prompt);

// ---- metrics -----------------------------------------------------------------

// Inputs actually fed to the model during an evaluation, for the
// prompt-free audit.
struct EvalAudit {
  std::vector<TokenSeq> model_inputs;
};

struct EvalOptions {
  int max_generate_len = 16;
  EvalAudit* audit = nullptr;
  int* truncations = nullptr;  // counts inputs truncated to fit max_seq_len
};

// Greedy generation compared token-exactly against gold. When a prompt is
// given it is prepended to every input (the input, never the prompt, is
// truncated on overflow).
double eval_exact_match(const TransformerLM& model, const TokenSeq* prompt,
                        const std::vector<TaskExample>& examples,
                        const EvalOptions& options = {});

// exp of the mean token NLL of gold outputs (with <eos>) under teacher
// forcing.
double eval_perplexity(const TransformerLM& model, const TokenSeq* prompt,
                       const std::vector<TaskExample>& examples,
                       const EvalOptions& options = {});

double eval_metric(const TransformerLM& model, const TokenSeq* prompt,
                   const std::vector<TaskExample>& examples, TaskMetric metric,
                   const EvalOptions& options = {});

// ---- oracles -----------------------------------------------------------------
// Mechanical answer derivations from (prompt, input); used to verify suite
// construction, prompt dependence, and generator output quality.

std::optional<TokenSeq> persona_oracle_answer(const Vocabulary& vocab,
                                              const TokenSeq& prompt_tokens,
                                              const TokenSeq& question);
std::optional<TokenSeq> schema_oracle_answer(const Vocabulary& vocab,
                                             const TokenSeq& prompt_tokens,
                                             const TokenSeq& question);
bool is_well_formed_persona_question(const Vocabulary& vocab, const TokenSeq& tokens);
bool is_well_formed_schema_question(const Vocabulary& vocab, const TokenSeq& tokens);

// Fraction of examples whose oracle answer changes when its prompt is
// replaced by another prompt of the suite (round-robin pairing).
double prompt_dependence_rate(const TaskSuite& suite);

// (prompt tokens, task input tokens) pairs over the training split;
// the training set of the PING input generator.
PromptInputPairs prompt_input_pairs(const TaskSuite& suite);

// ---- serialization -----------------------------------------------------------
// Line-oriented text format:
//   SUITE <name> <metric> <direction>
//   PROMPT <split/id> <tokens...>
//   EXAMPLE <split/id> <input tokens...> <output tokens...>
// Fields are tab-separated; tokens within a field are space-separated.
void save_suite(const TaskSuite& suite, const std::string& path);
TaskSuite load_suite(const std::string& path);

}  // namespace pfi
