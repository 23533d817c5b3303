// pfi: desk-scale prompt injection toolkit.
//
// Subcommands: gen-task, train-bounds, inject, eval, cost, chat.
// Config values come from defaults, then an optional JSON file (--config,
// unknown keys rejected), then explicit flags. PF_SEED serves as the global
// seed fallback. Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "pfi/checkpoint.hpp"
#include "pfi/costmodel.hpp"
#include "pfi/errors.hpp"
#include "pfi/evaluation.hpp"
#include "pfi/tasks.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
  uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = "runs";
  // model
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int max_seq_len = 48;
  // task
  std::string task_name = "persona";
  int train_prompts = 256;
  int heldout_prompts = 8;
  int facts_per_persona = 5;
  int tables_per_schema = 1;
  int words_per_input = 5;
  int examples_per_prompt = 8;
  // bound training
  int train_steps = 4000;
  double train_lr = 3e-3;
  int train_batch = 8;
  // injection
  std::string method = "cp";
  int inject_steps = 20;
  double inject_lr = 1e-4;
  int inject_batch = 8;
  double start_ratio = 0.15;
  double end_ratio = 0.15;
  int pseudo_inputs_per_step = 8;
  int max_pseudo_input_len = 8;
  int chunk_len = 40;
  int epochs = 1;
  // generator
  int generator_epochs = 2;
  double generator_lr = 1e-3;
};

uint64_t env_seed_fallback() {
  if (const char* s = std::getenv("PF_SEED")) return std::strtoull(s, nullptr, 10);
  return 0;
}

void check_keys(const json& j, const std::string& scope,
                const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw pfi::ContractViolation("config: unknown key '" + scope + key + "'");
  }
}

RunConfig load_config(const std::string& path) {
  RunConfig c;
  c.seed = env_seed_fallback();
  if (path.empty()) return c;
  std::ifstream is(path);
  if (!is) throw pfi::FileError("cannot open config file: " + path);
  json j = json::parse(is, nullptr, /*allow_exceptions=*/true);
  check_keys(j, "", {"seed", "out_dir", "model", "task", "train", "injection", "generator"});
  if (j.contains("seed")) {
    c.seed = j["seed"].get<uint64_t>();
    c.seed_given = true;
  }
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model.", {"d_model", "n_heads", "d_ff", "n_encoder_layers",
                             "n_decoder_layers", "max_seq_len"});
    if (m.contains("d_model")) c.d_model = m["d_model"].get<int>();
    if (m.contains("n_heads")) c.n_heads = m["n_heads"].get<int>();
    if (m.contains("d_ff")) c.d_ff = m["d_ff"].get<int>();
    if (m.contains("n_encoder_layers")) c.n_encoder_layers = m["n_encoder_layers"].get<int>();
    if (m.contains("n_decoder_layers")) c.n_decoder_layers = m["n_decoder_layers"].get<int>();
    if (m.contains("max_seq_len")) c.max_seq_len = m["max_seq_len"].get<int>();
  }
  if (j.contains("task")) {
    const json& t = j["task"];
    check_keys(t, "task.", {"name", "train_prompts", "heldout_prompts", "facts_per_persona",
                            "tables_per_schema", "words_per_input", "examples_per_prompt"});
    if (t.contains("name")) c.task_name = t["name"].get<std::string>();
    if (t.contains("train_prompts")) c.train_prompts = t["train_prompts"].get<int>();
    if (t.contains("heldout_prompts")) c.heldout_prompts = t["heldout_prompts"].get<int>();
    if (t.contains("facts_per_persona")) c.facts_per_persona = t["facts_per_persona"].get<int>();
    if (t.contains("tables_per_schema")) c.tables_per_schema = t["tables_per_schema"].get<int>();
    if (t.contains("words_per_input")) c.words_per_input = t["words_per_input"].get<int>();
    if (t.contains("examples_per_prompt"))
      c.examples_per_prompt = t["examples_per_prompt"].get<int>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train.", {"steps", "learning_rate", "batch_size"});
    if (t.contains("steps")) c.train_steps = t["steps"].get<int>();
    if (t.contains("learning_rate")) c.train_lr = t["learning_rate"].get<double>();
    if (t.contains("batch_size")) c.train_batch = t["batch_size"].get<int>();
  }
  if (j.contains("injection")) {
    const json& i = j["injection"];
    check_keys(i, "injection.",
               {"method", "steps", "learning_rate", "batch_size", "start_ratio",
                "end_ratio", "pseudo_inputs_per_step", "max_pseudo_input_len",
                "chunk_len", "epochs"});
    if (i.contains("method")) c.method = i["method"].get<std::string>();
    if (i.contains("steps")) c.inject_steps = i["steps"].get<int>();
    if (i.contains("learning_rate")) c.inject_lr = i["learning_rate"].get<double>();
    if (i.contains("batch_size")) c.inject_batch = i["batch_size"].get<int>();
    if (i.contains("start_ratio")) c.start_ratio = i["start_ratio"].get<double>();
    if (i.contains("end_ratio")) c.end_ratio = i["end_ratio"].get<double>();
    if (i.contains("pseudo_inputs_per_step"))
      c.pseudo_inputs_per_step = i["pseudo_inputs_per_step"].get<int>();
    if (i.contains("max_pseudo_input_len"))
      c.max_pseudo_input_len = i["max_pseudo_input_len"].get<int>();
    if (i.contains("chunk_len")) c.chunk_len = i["chunk_len"].get<int>();
    if (i.contains("epochs")) c.epochs = i["epochs"].get<int>();
  }
  if (j.contains("generator")) {
    const json& g = j["generator"];
    check_keys(g, "generator.", {"epochs", "learning_rate"});
    if (g.contains("epochs")) c.generator_epochs = g["epochs"].get<int>();
    if (g.contains("learning_rate")) c.generator_lr = g["learning_rate"].get<double>();
  }
  return c;
}

pfi::ModelConfig model_config_for(const RunConfig& c, const pfi::Vocabulary& vocab) {
  pfi::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.d_model = c.d_model;
  mc.n_heads = c.n_heads;
  mc.d_ff = c.d_ff;
  mc.n_encoder_layers = c.n_encoder_layers;
  mc.n_decoder_layers = c.n_decoder_layers;
  mc.max_seq_len = c.max_seq_len;
  mc.n_sentinels = vocab.n_sentinels();
  mc.validate();
  return mc;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const RunConfig& c, const std::string& command) {
  std::ostringstream os;
  os << command << '|' << c.seed << '|' << c.task_name << '|' << c.d_model << ','
     << c.n_heads << ',' << c.d_ff << ',' << c.n_encoder_layers << ','
     << c.n_decoder_layers << ',' << c.max_seq_len << '|' << c.train_prompts << ','
     << c.heldout_prompts << ',' << c.facts_per_persona << ',' << c.tables_per_schema
     << ',' << c.examples_per_prompt << '|' << c.train_steps << ',' << c.train_lr << ','
     << c.train_batch << '|' << c.method << ',' << c.inject_steps << ',' << c.inject_lr
     << ',' << c.start_ratio << ',' << c.end_ratio << ',' << c.chunk_len << ','
     << c.epochs;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%08llx",
                static_cast<unsigned long long>(fnv1a(os.str()) & 0xffffffffULL));
  return buf;
}

fs::path run_directory(const RunConfig& c, const std::string& command) {
  fs::path dir = fs::path(c.out_dir) / ("run-" + config_fingerprint(c, command));
  fs::create_directories(dir);
  return dir;
}

pfi::TaskSuite generate_suite(const RunConfig& c) {
  if (c.task_name == "persona")
    return pfi::gen_persona_task(c.seed, c.train_prompts, c.heldout_prompts,
                                 c.facts_per_persona, c.examples_per_prompt);
  if (c.task_name == "schema")
    return pfi::gen_schema_task(c.seed, c.train_prompts, c.heldout_prompts,
                                c.tables_per_schema, c.examples_per_prompt);
  throw pfi::ContractViolation("gen-task: task must be persona or schema");
}

const pfi::PromptExamples& find_prompt(const pfi::TaskSuite& suite, const std::string& id) {
  for (const auto& pe : suite.heldout_prompts)
    if (pe.prompt.id == id) return pe;
  for (const auto& pe : suite.train_prompts)
    if (pe.prompt.id == id) return pe;
  throw pfi::ContractViolation("prompt id not found in suite: " + id);
}

void dump_batches(const std::string& path, const pfi::Vocabulary& vocab,
                  const pfi::EvalAudit& audit) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::app);
  if (!os) throw pfi::FileError("cannot open batch dump file: " + path);
  for (const auto& input : audit.model_inputs) os << vocab.detokenize(input) << '\n';
}

double suite_metric(const pfi::TaskSuite& suite, const pfi::TransformerLM& model,
                    const pfi::TokenSeq* prompt, const std::vector<pfi::TaskExample>& ex,
                    pfi::EvalAudit* audit) {
  pfi::EvalOptions opts;
  opts.audit = audit;
  return pfi::eval_metric(model, prompt, ex, suite.metric, opts);
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_gen_task(const RunConfig& cfg, const std::string& out_path) {
  pfi::TaskSuite suite = generate_suite(cfg);
  pfi::save_suite(suite, out_path);
  size_t min_len = SIZE_MAX, max_len = 0, total = 0;
  for (const auto& pe : suite.train_prompts) {
    min_len = std::min(min_len, pe.prompt.tokens.size());
    max_len = std::max(max_len, pe.prompt.tokens.size());
    total += pe.prompt.tokens.size();
  }
  std::cout << "wrote " << out_path << "\n"
            << "task: " << suite.name << "  train prompts: " << suite.train_prompts.size()
            << "  held-out prompts: " << suite.heldout_prompts.size() << "\n"
            << "prompt tokens: min " << min_len << "  max " << max_len << "  mean "
            << (suite.train_prompts.empty()
                    ? 0.0
                    : static_cast<double>(total) / suite.train_prompts.size())
            << "\n";
  return 0;
}

int cmd_train_bounds(const RunConfig& cfg, const std::string& suite_path) {
  const pfi::TaskSuite suite = pfi::load_suite(suite_path);
  const pfi::Vocabulary vocab = pfi::vocabulary_for_task(suite.name);
  const pfi::ModelConfig mc = model_config_for(cfg, vocab);
  pfi::Rng rng(cfg.seed);
  pfi::TransformerLM base = pfi::TransformerLM::init(mc, rng);

  pfi::TrainConfig tc;
  tc.steps = cfg.train_steps;
  tc.learning_rate = cfg.train_lr;
  tc.batch_size = cfg.train_batch;
  tc.seed = cfg.seed;
  const pfi::BoundModels bounds = pfi::train_bounds(base, suite, tc);

  const fs::path dir = run_directory(cfg, "train-bounds");
  pfi::save_checkpoint(bounds.upper, (dir / "upper.pfck").string());
  pfi::save_checkpoint(bounds.lower, (dir / "lower.pfck").string());
  pfi::save_checkpoint(base, (dir / "base.pfck").string());

  std::ostringstream log;
  log.precision(4);
  log << std::fixed;
  log << "suite: " << suite.name << "  steps: " << tc.steps << "  lr: " << tc.learning_rate
      << "  seed: " << cfg.seed << "  upper-truncations: " << bounds.upper_truncations
      << "\n";
  double up_sum = 0.0, lo_sum = 0.0;
  for (const auto& pe : suite.heldout_prompts) {
    const double up = suite_metric(suite, bounds.upper, &pe.prompt.tokens, pe.examples, nullptr);
    const double lo = suite_metric(suite, bounds.lower, nullptr, pe.examples, nullptr);
    up_sum += up;
    lo_sum += lo;
    log << pe.prompt.id << "  upper " << up << "  lower " << lo << "\n";
  }
  log << "mean  upper " << up_sum / suite.heldout_prompts.size() << "  lower "
      << lo_sum / suite.heldout_prompts.size() << "\n";
  std::ofstream metrics(dir / "metrics.txt");
  metrics << log.str();
  std::cout << log.str() << "checkpoints in " << dir.string() << "\n";
  return 0;
}

int cmd_inject(const RunConfig& cfg, const std::string& suite_path,
               const std::string& lower_path, const std::string& upper_path,
               const std::string& prompt_id, const std::string& out_path,
               const std::string& report_path) {
  const pfi::TaskSuite suite = pfi::load_suite(suite_path);
  const pfi::Vocabulary vocab = pfi::vocabulary_for_task(suite.name);
  const pfi::TransformerLM lower = pfi::load_checkpoint(lower_path);
  const pfi::PromptExamples& pe = find_prompt(suite, prompt_id);

  pfi::InjectionConfig inj;
  if (cfg.method == "cp") {
    inj = pfi::InjectionConfig::cp_defaults();
    inj.mask_schedule = {cfg.start_ratio, cfg.start_ratio, 1};
  } else if (cfg.method == "cp-curr") {
    inj = pfi::InjectionConfig::cp_curriculum_defaults(cfg.end_ratio,
                                                       std::max(1, cfg.inject_steps));
    inj.mask_schedule.start_ratio = cfg.start_ratio;
  } else if (cfg.method == "ping") {
    inj = pfi::InjectionConfig::ping_defaults();
    inj.pseudo_inputs_per_step = cfg.pseudo_inputs_per_step;
    inj.max_pseudo_input_len = cfg.max_pseudo_input_len;
  } else {
    throw pfi::ContractViolation("inject: method must be cp, cp-curr or ping");
  }
  inj.steps = cfg.inject_steps;
  inj.learning_rate = cfg.inject_lr;
  inj.batch_size = cfg.inject_batch;
  inj.chunk_len = cfg.chunk_len;
  inj.epochs = cfg.epochs;
  inj.seed = cfg.seed;

  pfi::InjectionStats stats;
  pfi::TransformerLM injected;
  std::optional<pfi::TransformerLM> upper;
  std::optional<pfi::TransformerLM> generator;
  if (cfg.method == "ping") {
    if (upper_path.empty())
      throw pfi::ContractViolation("inject: --upper checkpoint required for ping");
    upper = pfi::load_checkpoint(upper_path);
    pfi::GeneratorTrainConfig gen_cfg;
    gen_cfg.epochs = cfg.generator_epochs;
    gen_cfg.learning_rate = cfg.generator_lr;
    gen_cfg.seed = cfg.seed;
    pfi::Rng grng(cfg.seed);
    pfi::TransformerLM gen_base =
        pfi::TransformerLM::init(model_config_for(cfg, vocab), grng);
    generator = pfi::train_input_generator(gen_base, pfi::prompt_input_pairs(suite), gen_cfg);
    pfi::PingContext ctx{&*upper, &*generator};
    injected = pfi::inject_long(lower, pe.prompt, inj, vocab, ctx, &stats);
  } else {
    injected = pfi::inject_long(lower, pe.prompt, inj, vocab, std::nullopt, &stats);
  }
  pfi::save_checkpoint(injected, out_path);

  double x_upper = 0.0;
  bool have_upper = false;
  if (!upper && !upper_path.empty()) upper = pfi::load_checkpoint(upper_path);
  if (upper) {
    x_upper = suite_metric(suite, *upper, &pe.prompt.tokens, pe.examples, nullptr);
    have_upper = true;
  }
  const double x_lower = suite_metric(suite, lower, nullptr, pe.examples, nullptr);
  pfi::EvalAudit audit;
  const double x_pi = suite_metric(suite, injected, nullptr, pe.examples, &audit);

  std::cout.precision(4);
  std::cout << std::fixed;
  std::cout << "injected " << prompt_id << " via " << cfg.method << " (" << stats.steps_run
            << " steps";
  if (cfg.method != "ping") std::cout << ", final mask ratio " << stats.final_mask_ratio;
  if (stats.pseudo_input_truncations > 0)
    std::cout << ", " << stats.pseudo_input_truncations << " pseudo-input truncations";
  std::cout << ")\n";
  std::cout << "loss first step " << stats.first_step_loss << " -> last step "
            << stats.last_step_loss << "\n";
  std::cout << "x_lower " << x_lower << "  x_pi " << x_pi;
  if (have_upper) {
    std::cout << "  x_upper " << x_upper;
    try {
      const double score = pfi::pi_score(x_upper, x_lower, x_pi, suite.direction);
      std::cout << "  PI score " << score;
      if (!report_path.empty()) {
        const bool fresh = !fs::exists(report_path);
        std::ofstream rep(report_path, std::ios::app);
        if (fresh) rep << "prompt_id,x_upper,x_lower,x_pi,score\n";
        rep << prompt_id << ',' << x_upper << ',' << x_lower << ',' << x_pi << ','
            << score << '\n';
      }
    } catch (const pfi::InvalidBaselineError&) {
      std::cout << "  PI score n/a (upper bound not better than lower)";
    }
  }
  std::cout << "\nwrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& suite_path, const std::string& ckpt_path,
             const std::string& prompt_id, bool with_prompt,
             const std::string& dump_path) {
  const pfi::TaskSuite suite = pfi::load_suite(suite_path);
  const pfi::Vocabulary vocab = pfi::vocabulary_for_task(suite.name);
  const pfi::TransformerLM model = pfi::load_checkpoint(ckpt_path);
  std::cout.precision(4);
  std::cout << std::fixed;
  double sum = 0.0;
  int count = 0;
  auto eval_one = [&](const pfi::PromptExamples& pe) {
    pfi::EvalAudit audit;
    const double value = suite_metric(suite, model, with_prompt ? &pe.prompt.tokens : nullptr,
                                      pe.examples, &audit);
    dump_batches(dump_path, vocab, audit);
    std::cout << pe.prompt.id << "  " << value << "\n";
    sum += value;
    ++count;
  };
  if (!prompt_id.empty()) {
    eval_one(find_prompt(suite, prompt_id));
  } else {
    for (const auto& pe : suite.heldout_prompts) eval_one(pe);
  }
  std::cout << "mean  " << sum / count << "\n";
  return 0;
}

int cmd_cost(const std::string& prompt_lens, const std::string& strategies, int input_len,
             int output_len, int chunk_len, double budget, const std::string& out_dir) {
  pfi::CostGeometry geom;
  std::vector<int> lens;
  {
    std::istringstream is(prompt_lens);
    std::string part;
    while (std::getline(is, part, ',')) lens.push_back(std::stoi(part));
  }
  std::vector<pfi::Strategy> strats;
  {
    std::istringstream is(strategies);
    std::string part;
    while (std::getline(is, part, ',')) {
      if (part == "concat") strats.push_back(pfi::Strategy::kConcat);
      else if (part == "fid") strats.push_back(pfi::Strategy::kFid);
      else if (part == "linear") strats.push_back(pfi::Strategy::kLinear);
      else throw pfi::ContractViolation("cost: unknown strategy '" + part + "'");
    }
  }
  std::vector<pfi::Scenario> scenarios;
  pfi::Scenario base;
  base.input_len = input_len;
  base.output_len = output_len;
  base.chunk_len = chunk_len;
  base.memory_budget_bytes = budget;
  base.strategy = pfi::Strategy::kPI;
  base.prompt_len = 0;
  scenarios.push_back(base);
  for (pfi::Strategy s : strats)
    for (int len : lens) {
      pfi::Scenario sc = base;
      sc.strategy = s;
      sc.prompt_len = len;
      scenarios.push_back(sc);
    }
  const auto table = pfi::cost_table(geom, scenarios);
  fs::create_directories(out_dir);
  {
    std::ofstream csv(fs::path(out_dir) / "cost.csv");
    csv << pfi::cost_table_csv(table);
    std::ofstream txt(fs::path(out_dir) / "cost.txt");
    txt << pfi::cost_table_text(table);
  }
  std::cout << pfi::cost_table_text(table);
  std::cout << "wrote " << (fs::path(out_dir) / "cost.csv").string() << " and cost.txt\n";
  return 0;
}

int cmd_chat(const std::string& ckpt_path, const std::string& task_name, int max_len,
             const std::string& dump_path) {
  const pfi::TransformerLM model = pfi::load_checkpoint(ckpt_path);
  const pfi::Vocabulary vocab = pfi::vocabulary_for_task(task_name);
  if (vocab.size() != model.config().vocab_size)
    throw pfi::ContractViolation("chat: checkpoint vocabulary does not match task '" +
                                 task_name + "'");
  pfi::Rng rng(0);
  std::string line;
  while (std::getline(std::cin, line)) {
    std::vector<std::string> skipped;
    const pfi::TokenSeq input = vocab.tokenize_lenient(line, &skipped);
    if (!skipped.empty()) {
      std::cerr << "(ignoring unknown words:";
      for (const auto& w : skipped) std::cerr << ' ' << w;
      std::cerr << ")\n";
    }
    if (input.empty()) {
      std::cout << "(say something in-vocabulary)\n";
      continue;
    }
    if (!dump_path.empty()) {
      pfi::EvalAudit audit;
      audit.model_inputs.push_back(input);
      dump_batches(dump_path, vocab, audit);
    }
    const pfi::TokenSeq reply = model.generate(input, pfi::DecodeMode::kGreedy, max_len, rng);
    std::cout << (reply.empty() ? "..." : vocab.detokenize(reply)) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pfi: prompt injection experimentation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override it)");

  // gen-task
  auto* gen = app.add_subcommand("gen-task", "generate a synthetic task suite");
  std::string gen_task_name;
  std::string gen_out;
  uint64_t flag_seed = 0;
  gen->add_option("task", gen_task_name, "persona or schema")
      ->required()
      ->check(CLI::IsMember({"persona", "schema"}));
  gen->add_option("--out", gen_out, "output suite file")->required();
  gen->add_option("--seed", flag_seed, "generation seed");
  int gen_train = -1, gen_heldout = -1, gen_facts = -1, gen_tables = -1, gen_examples = -1;
  gen->add_option("--train-prompts", gen_train, "");
  gen->add_option("--heldout-prompts", gen_heldout, "");
  gen->add_option("--facts", gen_facts, "facts per persona");
  gen->add_option("--tables", gen_tables, "tables per schema");
  gen->add_option("--examples", gen_examples, "examples per prompt");

  // train-bounds
  auto* tb = app.add_subcommand("train-bounds", "fine-tune upper/lower bound models");
  std::string tb_suite;
  tb->add_option("--suite", tb_suite, "suite file")->required();
  tb->add_option("--seed", flag_seed, "training seed");
  int tb_steps = -1;
  double tb_lr = -1.0;
  std::string tb_out_dir;
  tb->add_option("--steps", tb_steps, "");
  tb->add_option("--lr", tb_lr, "");
  tb->add_option("--out-dir", tb_out_dir, "run directory root");

  // inject
  auto* inj = app.add_subcommand("inject", "inject a prompt into the lower-bound model");
  std::string inj_suite, inj_lower, inj_upper, inj_prompt, inj_out, inj_report, inj_method;
  int inj_steps = -1, inj_epochs = -1, inj_chunk = -1;
  double inj_lr = -1.0, inj_end_ratio = -1.0;
  inj->add_option("--suite", inj_suite, "")->required();
  inj->add_option("--lower", inj_lower, "lower-bound checkpoint")->required();
  inj->add_option("--upper", inj_upper, "upper-bound checkpoint (teacher for ping)");
  inj->add_option("--prompt-id", inj_prompt, "prompt to inject")->required();
  inj->add_option("--method", inj_method, "cp | cp-curr | ping")->required();
  inj->add_option("--out", inj_out, "injected checkpoint path")->required();
  inj->add_option("--report", inj_report, "append a CSV score row here");
  inj->add_option("--steps", inj_steps, "");
  inj->add_option("--lr", inj_lr, "");
  inj->add_option("--end-ratio", inj_end_ratio, "curriculum end mask ratio");
  inj->add_option("--epochs", inj_epochs, "long-prompt epochs");
  inj->add_option("--chunk-len", inj_chunk, "sub-prompt chunk length");
  inj->add_option("--seed", flag_seed, "");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a suite");
  std::string ev_suite, ev_ckpt, ev_prompt, ev_dump;
  bool ev_with_prompt = false;
  ev->add_option("--suite", ev_suite, "")->required();
  ev->add_option("--ckpt", ev_ckpt, "")->required();
  ev->add_option("--prompt-id", ev_prompt, "restrict to one prompt");
  ev->add_flag("--with-prompt", ev_with_prompt, "prepend the prompt to inputs");
  ev->add_option("--dump-batches", ev_dump, "append model inputs to this file");

  // cost
  auto* cost = app.add_subcommand("cost", "emit the analytic inference cost table");
  std::string cost_lens = "512,1024,2048,4096,14336";
  std::string cost_strats = "concat,fid,linear";
  int cost_input = 64, cost_output = 1, cost_chunk = 512;
  double cost_budget = 16e9;
  std::string cost_out = "runs/cost";
  cost->add_option("--prompt-lens", cost_lens, "comma-separated prompt lengths");
  cost->add_option("--strategies", cost_strats, "subset of concat,fid,linear");
  cost->add_option("--input-len", cost_input, "");
  cost->add_option("--output-len", cost_output, "");
  cost->add_option("--chunk-len", cost_chunk, "");
  cost->add_option("--budget", cost_budget, "memory budget in bytes");
  cost->add_option("--out-dir", cost_out, "");

  // chat
  auto* chat = app.add_subcommand("chat", "REPL against an injected checkpoint");
  std::string chat_ckpt, chat_task = "persona", chat_dump;
  int chat_max_len = 16;
  chat->add_option("--ckpt", chat_ckpt, "")->required();
  chat->add_option("--task", chat_task, "task vocabulary to use");
  chat->add_option("--max-len", chat_max_len, "");
  chat->add_option("--dump-batches", chat_dump, "append model inputs to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help exits cleanly; usage errors exit 2
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (gen->parsed()) {
      if (gen->count("--seed")) cfg.seed = flag_seed;
      cfg.task_name = gen_task_name;
      if (gen_train > 0) cfg.train_prompts = gen_train;
      if (gen_heldout > 0) cfg.heldout_prompts = gen_heldout;
      if (gen_facts > 0) cfg.facts_per_persona = gen_facts;
      if (gen_tables > 0) cfg.tables_per_schema = gen_tables;
      if (gen_examples > 0) cfg.examples_per_prompt = gen_examples;
      return cmd_gen_task(cfg, gen_out);
    }
    if (tb->parsed()) {
      if (tb->count("--seed")) cfg.seed = flag_seed;
      if (tb_steps > 0) cfg.train_steps = tb_steps;
      if (tb_lr > 0) cfg.train_lr = tb_lr;
      if (!tb_out_dir.empty()) cfg.out_dir = tb_out_dir;
      return cmd_train_bounds(cfg, tb_suite);
    }
    if (inj->parsed()) {
      if (inj->count("--seed")) cfg.seed = flag_seed;
      cfg.method = inj_method;
      if (inj_steps >= 0) cfg.inject_steps = inj_steps;
      if (inj_lr > 0) cfg.inject_lr = inj_lr;
      if (inj_end_ratio > 0) cfg.end_ratio = inj_end_ratio;
      if (inj_epochs > 0) cfg.epochs = inj_epochs;
      if (inj_chunk > 0) cfg.chunk_len = inj_chunk;
      return cmd_inject(cfg, inj_suite, inj_lower, inj_upper, inj_prompt, inj_out,
                        inj_report);
    }
    if (ev->parsed())
      return cmd_eval(ev_suite, ev_ckpt, ev_prompt, ev_with_prompt, ev_dump);
    if (cost->parsed())
      return cmd_cost(cost_lens, cost_strats, cost_input, cost_output, cost_chunk,
                      cost_budget, cost_out);
    if (chat->parsed()) return cmd_chat(chat_ckpt, chat_task, chat_max_len, chat_dump);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
