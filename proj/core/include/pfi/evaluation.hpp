#pragma once

#include <string>
#include <vector>

#include "pfi/injection.hpp"
#include "pfi/tasks.hpp"

namespace pfi {

// Per-prompt min-max-scaled task score of the injected model between the
// no-prompt lower bound and the with-prompt upper bound.
struct PiScoreReport {
  std::string prompt_id;
  double x_upper = 0.0;
  double x_lower = 0.0;
  double x_pi = 0.0;
  MetricDirection direction = MetricDirection::kHigherBetter;
  double score = 0.0;
};

// max(0, improvement of x_pi over the lower bound) / (bound gap), oriented
// by direction. InvalidBaselineError when the upper bound is not strictly
// better than the lower bound.
double pi_score(double x_upper, double x_lower, double x_pi, MetricDirection direction);

struct TrainConfig {
  int steps = 800;
  double learning_rate = 1e-3;
  int batch_size = 8;
  uint64_t seed = 0;
};

struct ExperimentConfig {
  TrainConfig bound_training;
  InjectionConfig injection;
  GeneratorTrainConfig generator;  // PING only
  std::vector<uint64_t> seeds{1};
  int eval_max_len = 12;
  bool audit_eval_inputs = true;  // assert no prompt tokens reach the injected model
};

struct ExperimentReport {
  std::string suite_name;
  std::string method_name;
  std::vector<PiScoreReport> rows;  // one per (seed, held-out prompt)
  double mean_score = 0.0;
  // metadata
  std::vector<uint64_t> seeds;
  int injection_steps = 0;
  int bound_steps = 0;
  int upper_truncations = 0;
  std::vector<std::string> skipped_prompts;  // invalid-baseline exclusions
  double wall_seconds = 0.0;  // informational; not part of report identity

  // Deterministic content (everything except wall time), used by
  // reproducibility checks and CSV output.
  std::string csv() const;
  std::string table_text() const;
  bool same_results(const ExperimentReport& other) const;
};

// Bounds shared by experiment runs: upper fine-tuned on (prompt + input ->
// output), lower on (input -> output), both from the same base model.
struct BoundModels {
  TransformerLM upper;
  TransformerLM lower;
  int upper_truncations = 0;
};

BoundModels train_bounds(const TransformerLM& base, const TaskSuite& suite,
                         const TrainConfig& cfg);

// Just the no-prompt lower bound; long-prompt demos need no upper model.
TransformerLM train_lower_bound(const TransformerLM& base, const TaskSuite& suite,
                                const TrainConfig& cfg);

// Full protocol: train bounds, evaluate them per held-out prompt, inject
// into a fresh copy of the lower model, evaluate the injected model without
// the prompt, and aggregate PI scores. Prompts whose upper bound is not
// better than their lower bound are skipped and recorded.
ExperimentReport run_experiment(const TaskSuite& suite, const TransformerLM& base,
                                const ExperimentConfig& cfg);

// Sweep form: several injection configs against the same bounds (and, for
// PING entries, the same generator), trained once per seed. Reports come
// back in the order of the configs.
std::vector<ExperimentReport> run_experiment_sweep(
    const TaskSuite& suite, const TransformerLM& base, const ExperimentConfig& cfg,
    const std::vector<InjectionConfig>& methods);

std::string method_name(InjectionMethod method);

}  // namespace pfi
