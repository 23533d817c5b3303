#include "pfi/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pfi/errors.hpp"
#include "pfi/optim.hpp"

namespace pfi {

double pi_score(double x_upper, double x_lower, double x_pi, MetricDirection direction) {
  if (direction == MetricDirection::kHigherBetter) {
    if (!(x_upper > x_lower))
      throw InvalidBaselineError("pi_score: upper bound must exceed lower bound");
    return std::max(0.0, x_pi - x_lower) / (x_upper - x_lower);
  }
  if (!(x_upper < x_lower))
    throw InvalidBaselineError("pi_score: upper bound must be below lower bound");
  return std::max(0.0, x_lower - x_pi) / (x_lower - x_upper);
}

std::string method_name(InjectionMethod method) {
  switch (method) {
    case InjectionMethod::kCP: return "cp";
    case InjectionMethod::kCPCurriculum: return "cp-curr";
    case InjectionMethod::kPING: return "ping";
  }
  return "?";
}

namespace {

// Flattened (prompt index, example index) list for uniform batch sampling.
struct FlatDataset {
  std::vector<std::pair<size_t, size_t>> items;
};

FlatDataset flatten(const std::vector<PromptExamples>& prompts) {
  FlatDataset ds;
  for (size_t p = 0; p < prompts.size(); ++p)
    for (size_t e = 0; e < prompts[p].examples.size(); ++e) ds.items.emplace_back(p, e);
  return ds;
}

TokenSeq with_eos(const TokenSeq& seq) {
  TokenSeq out = seq;
  out.push_back(2 /* <eos> */);
  return out;
}

// Fine-tunes a copy of base on the training split; with_prompt selects the
// upper-bound (prompt + input) or lower-bound (input only) source. The input
// tail, never the prompt, is truncated on overflow.
TransformerLM finetune(const TransformerLM& base, const TaskSuite& suite,
                       const TrainConfig& cfg, bool with_prompt, int* truncations) {
  TransformerLM model = base.clone();
  AdamState opt;
  opt.learning_rate = cfg.learning_rate;
  Rng rng(cfg.seed + (with_prompt ? 0x5bd1e995ULL : 0));
  const FlatDataset ds = flatten(suite.train_prompts);
  if (ds.items.empty()) throw ContractViolation("finetune: suite has no training examples");
  const int max_seq = model.config().max_seq_len;
  for (int step = 0; step < cfg.steps; ++step) {
    model.zero_grads();
    Tape tape;
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& [p, e] = ds.items[static_cast<size_t>(
          rng.uniform_int(static_cast<int>(ds.items.size())))];
      const PromptExamples& pe = suite.train_prompts[p];
      const TaskExample& ex = pe.examples[e];
      TokenSeq source;
      if (with_prompt) {
        source = pe.prompt.tokens;
        source.insert(source.end(), ex.input.begin(), ex.input.end());
        if (static_cast<int>(source.size()) > max_seq) {
          source.resize(static_cast<size_t>(max_seq));
          if (truncations) ++*truncations;
        }
      } else {
        source = ex.input;
      }
      total = add(tape, total, model.sequence_loss(tape, source, with_eos(ex.output)));
    }
    Tensor loss = scale(tape, total, 1.0 / cfg.batch_size);
    tape.backward(loss);
    adam_step(model.params(), opt);
  }
  return model;
}

void audit_no_prompt_tokens(const EvalAudit& audit, const TokenSeq& prompt,
                            const std::vector<TaskExample>& examples) {
  for (size_t i = 0; i < audit.model_inputs.size(); ++i) {
    const TokenSeq& input = audit.model_inputs[i];
    if (i < examples.size() && input != examples[i].input)
      throw ContractViolation("prompt-free audit: evaluation input differs from the raw example");
    if (prompt.size() >= 2 &&
        std::search(input.begin(), input.end(), prompt.begin(), prompt.end()) != input.end())
      throw ContractViolation("prompt-free audit: prompt tokens found in evaluation input");
  }
}

}  // namespace

BoundModels train_bounds(const TransformerLM& base, const TaskSuite& suite,
                         const TrainConfig& cfg) {
  suite.validate();
  BoundModels out;
  out.upper = finetune(base, suite, cfg, /*with_prompt=*/true, &out.upper_truncations);
  out.lower = finetune(base, suite, cfg, /*with_prompt=*/false, nullptr);
  return out;
}

TransformerLM train_lower_bound(const TransformerLM& base, const TaskSuite& suite,
                                const TrainConfig& cfg) {
  suite.validate();
  return finetune(base, suite, cfg, /*with_prompt=*/false, nullptr);
}

std::vector<ExperimentReport> run_experiment_sweep(
    const TaskSuite& suite, const TransformerLM& base, const ExperimentConfig& cfg,
    const std::vector<InjectionConfig>& methods) {
  suite.validate();
  if (suite.heldout_prompts.empty())
    throw ContractViolation("run_experiment: suite needs at least one held-out prompt");
  if (methods.empty())
    throw ContractViolation("run_experiment: no injection configs given");
  const auto t0 = std::chrono::steady_clock::now();
  const Vocabulary vocab = vocabulary_for_task(suite.name);

  std::vector<ExperimentReport> reports(methods.size());
  for (size_t m = 0; m < methods.size(); ++m) {
    reports[m].suite_name = suite.name;
    reports[m].method_name = method_name(methods[m].method);
    reports[m].seeds = cfg.seeds;
    reports[m].injection_steps = methods[m].steps;
    reports[m].bound_steps = cfg.bound_training.steps;
  }
  bool need_generator = false;
  for (const InjectionConfig& inj : methods)
    if (inj.method == InjectionMethod::kPING) need_generator = true;

  for (uint64_t seed : cfg.seeds) {
    TrainConfig bound_cfg = cfg.bound_training;
    bound_cfg.seed = seed;
    const BoundModels bounds = train_bounds(base, suite, bound_cfg);
    for (ExperimentReport& report : reports)
      report.upper_truncations += bounds.upper_truncations;

    TransformerLM generator;
    if (need_generator) {
      GeneratorTrainConfig gen_cfg = cfg.generator;
      gen_cfg.seed = seed;
      generator = train_input_generator(base, prompt_input_pairs(suite), gen_cfg);
    }

    for (size_t p = 0; p < suite.heldout_prompts.size(); ++p) {
      const PromptExamples& pe = suite.heldout_prompts[p];
      EvalOptions bound_opts;
      bound_opts.max_generate_len = cfg.eval_max_len;
      const double x_upper = eval_metric(bounds.upper, &pe.prompt.tokens, pe.examples,
                                         suite.metric, bound_opts);
      const double x_lower =
          eval_metric(bounds.lower, nullptr, pe.examples, suite.metric, bound_opts);

      for (size_t m = 0; m < methods.size(); ++m) {
        ExperimentReport& report = reports[m];
        InjectionConfig inj = methods[m];
        inj.seed = seed * 7919 + p;
        TransformerLM injected =
            inj.method == InjectionMethod::kPING
                ? inject_ping(bounds.lower, bounds.upper, generator, pe.prompt, inj)
                : inject_cp(bounds.lower, pe.prompt, inj, vocab);

        EvalAudit audit;
        EvalOptions pi_opts;
        pi_opts.max_generate_len = cfg.eval_max_len;
        if (cfg.audit_eval_inputs) pi_opts.audit = &audit;
        const double x_pi =
            eval_metric(injected, nullptr, pe.examples, suite.metric, pi_opts);
        if (cfg.audit_eval_inputs)
          audit_no_prompt_tokens(audit, pe.prompt.tokens, pe.examples);

        PiScoreReport row;
        row.prompt_id = pe.prompt.id;
        row.x_upper = x_upper;
        row.x_lower = x_lower;
        row.x_pi = x_pi;
        row.direction = suite.direction;
        try {
          row.score = pi_score(x_upper, x_lower, x_pi, suite.direction);
        } catch (const InvalidBaselineError&) {
          report.skipped_prompts.push_back(pe.prompt.id + "@seed" + std::to_string(seed));
          continue;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (ExperimentReport& report : reports) {
    if (!report.rows.empty()) {
      double sum = 0.0;
      for (const auto& r : report.rows) sum += r.score;
      report.mean_score = sum / static_cast<double>(report.rows.size());
    }
    report.wall_seconds = wall;
  }
  return reports;
}

ExperimentReport run_experiment(const TaskSuite& suite, const TransformerLM& base,
                                const ExperimentConfig& cfg) {
  return run_experiment_sweep(suite, base, cfg, {cfg.injection})[0];
}

std::string ExperimentReport::csv() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "prompt_id,x_upper,x_lower,x_pi,score\n";
  for (const auto& r : rows)
    os << r.prompt_id << ',' << r.x_upper << ',' << r.x_lower << ',' << r.x_pi << ','
       << r.score << '\n';
  return os.str();
}

std::string ExperimentReport::table_text() const {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  os << "suite: " << suite_name << "  method: " << method_name << "\n";
  os << "bound steps: " << bound_steps << "  injection steps: " << injection_steps
     << "  seeds:";
  for (uint64_t s : seeds) os << ' ' << s;
  os << "  upper-truncations: " << upper_truncations << "\n";
  os << "prompt                    x_w/prompt  x_w/o_prompt  x_PI     PI score\n";
  for (const auto& r : rows) {
    os << r.prompt_id;
    for (size_t i = r.prompt_id.size(); i < 26; ++i) os << ' ';
    os << r.x_upper << "       " << r.x_lower << "         " << r.x_pi << "    "
       << r.score << "\n";
  }
  os << "mean PI score: " << mean_score << "\n";
  if (!skipped_prompts.empty()) {
    os << "skipped (invalid baseline):";
    for (const auto& id : skipped_prompts) os << ' ' << id;
    os << "\n";
  }
  return os.str();
}

bool ExperimentReport::same_results(const ExperimentReport& other) const {
  if (csv() != other.csv()) return false;
  return suite_name == other.suite_name && method_name == other.method_name &&
         seeds == other.seeds && skipped_prompts == other.skipped_prompts &&
         upper_truncations == other.upper_truncations &&
         mean_score == other.mean_score;
}

}  // namespace pfi
