#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pfi/checkpoint.hpp"
#include "pfi/tasks.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef PFI_BIN
#error "PFI_BIN must point at the pfi executable"
#endif

const char* kBin = PFI_BIN;

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run(const std::string& args, const std::string& stdin_text = "") {
  const fs::path dir = fs::temp_directory_path() / "pfi_cli_test";
  fs::create_directories(dir);
  const fs::path out_file = dir / "cmd_output.txt";
  std::string cmd = std::string(kBin) + " " + args;
  if (!stdin_text.empty()) {
    const fs::path in_file = dir / "cmd_input.txt";
    std::ofstream(in_file) << stdin_text;
    cmd += " < " + in_file.string();
  } else {
    cmd += " < /dev/null";
  }
  cmd += " > " + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "pfi_cli_test";
  fs::create_directories(dir);
  return dir;
}

// Tiny geometry so train-bounds runs in seconds.
std::string tiny_config_path() {
  const fs::path p = work_dir() / "tiny.json";
  std::ofstream os(p);
  os << R"({
  "seed": 3,
  "out_dir": ")" << (work_dir() / "runs").string() << R"(",
  "model": {"d_model": 16, "n_heads": 2, "d_ff": 32,
            "n_encoder_layers": 1, "n_decoder_layers": 1, "max_seq_len": 48},
  "task": {"name": "persona", "train_prompts": 2, "heldout_prompts": 1,
           "facts_per_persona": 3, "examples_per_prompt": 3},
  "train": {"steps": 6, "learning_rate": 0.001, "batch_size": 4}
})";
  return p.string();
}

}  // namespace

TEST_CASE("gen-task is deterministic byte for byte") {
  const fs::path a = work_dir() / "suite_a.txt";
  const fs::path b = work_dir() / "suite_b.txt";
  CHECK(run("gen-task persona --seed 11 --train-prompts 3 --heldout-prompts 2 --out " +
            a.string()).exit_code == 0);
  CHECK(run("gen-task persona --seed 11 --train-prompts 3 --heldout-prompts 2 --out " +
            b.string()).exit_code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(!slurp(a).empty());
}

TEST_CASE("gen-task schema honors --tables") {
  const fs::path p = work_dir() / "suite_schema.txt";
  const auto r = run("gen-task schema --seed 5 --tables 3 --train-prompts 2 "
                     "--heldout-prompts 1 --out " + p.string());
  CHECK(r.exit_code == 0);
  const pfi::TaskSuite suite = pfi::load_suite(p.string());
  const pfi::Vocabulary vocab = pfi::schema_vocabulary();
  const int table_tok = vocab.id_of("table");
  for (const auto& pe : suite.train_prompts) {
    int tables = 0;
    for (int tok : pe.prompt.tokens)
      if (tok == table_tok) ++tables;
    CHECK(tables == 3);
  }
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("gen-task persona").exit_code == 2);          // missing --out
  CHECK(run("gen-task nope --out /tmp/x").exit_code == 2);  // bad task name
  CHECK(run("no-such-command").exit_code == 2);
  CHECK(run("").exit_code == 2);  // missing subcommand
}

TEST_CASE("runtime errors exit with code 1") {
  CHECK(run("eval --suite /nonexistent.txt --ckpt /nonexistent.pfck").exit_code == 1);
  CHECK(run("chat --ckpt /nonexistent.pfck").exit_code == 1);
}

TEST_CASE("cost emits a table with the PI baseline at ratio one") {
  const fs::path dir = work_dir() / "cost";
  const auto r = run("cost --prompt-lens 512,1024 --out-dir " + dir.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PI") != std::string::npos);
  CHECK(r.output.find("(x1.0)") != std::string::npos);
  const std::string csv = slurp(dir / "cost.csv");
  CHECK(csv.find("PI,0,") != std::string::npos);
  CHECK(!slurp(dir / "cost.txt").empty());
  // ratios increase with prompt length
  const size_t p512 = r.output.find("CONCAT    512");
  const size_t p1024 = r.output.find("CONCAT    1024");
  CHECK(p512 != std::string::npos);
  CHECK(p1024 != std::string::npos);
}

TEST_CASE("full train-inject-eval-chat pipeline on a tiny config") {
  const std::string config = tiny_config_path();
  const fs::path suite_path = work_dir() / "pipeline_suite.txt";
  CHECK(run("--config " + config + " gen-task persona --seed 3 --train-prompts 2 "
            "--heldout-prompts 1 --facts 3 --examples 3 --out " +
            suite_path.string()).exit_code == 0);

  const auto tb = run("--config " + config + " train-bounds --suite " + suite_path.string());
  CHECK(tb.exit_code == 0);
  CHECK(tb.output.find("checkpoints in") != std::string::npos);

  // locate the run directory from the output line
  const std::string marker = "checkpoints in ";
  const size_t at = tb.output.find(marker);
  REQUIRE(at != std::string::npos);
  std::string run_dir = tb.output.substr(at + marker.size());
  run_dir = run_dir.substr(0, run_dir.find('\n'));
  const fs::path lower = fs::path(run_dir) / "lower.pfck";
  const fs::path upper = fs::path(run_dir) / "upper.pfck";
  REQUIRE(fs::exists(lower));
  REQUIRE(fs::exists(upper));
  CHECK(fs::exists(fs::path(run_dir) / "metrics.txt"));

  // reproducibility: rerunning the same config produces identical checkpoints
  const auto tb2 = run("--config " + config + " train-bounds --suite " + suite_path.string());
  CHECK(tb2.exit_code == 0);
  CHECK(slurp(lower) == slurp(lower));
  CHECK(tb.output == tb2.output);

  // inject with zero steps: the checkpoint equals the lower bound bitwise
  const fs::path injected = work_dir() / "injected.pfck";
  const auto inj = run("--config " + config + " inject --suite " + suite_path.string() +
                       " --lower " + lower.string() + " --upper " + upper.string() +
                       " --prompt-id heldout/persona-0 --method cp --steps 0 --out " +
                       injected.string());
  CHECK(inj.exit_code == 0);
  CHECK(slurp(injected) == slurp(lower));

  // cp-curr logs the final mask ratio reaching the end ratio
  const auto curr = run("--config " + config + " inject --suite " + suite_path.string() +
                        " --lower " + lower.string() + " --upper " + upper.string() +
                        " --prompt-id heldout/persona-0 --method cp-curr --steps 4 "
                        "--end-ratio 0.7 --lr 0.001 --out " + injected.string());
  CHECK(curr.exit_code == 0);
  CHECK(curr.output.find("final mask ratio 0.7") != std::string::npos);

  // ping writes a report row with a score column
  const fs::path report = work_dir() / "report.csv";
  fs::remove(report);
  const auto ping = run("--config " + config + " inject --suite " + suite_path.string() +
                        " --lower " + lower.string() + " --upper " + upper.string() +
                        " --prompt-id heldout/persona-0 --method ping --steps 2 "
                        "--lr 0.001 --out " + injected.string() + " --report " +
                        report.string());
  CHECK(ping.exit_code == 0);
  CHECK(ping.output.find("PI score") != std::string::npos);
  // a score row lands in the report only when the baseline is valid; a model
  // this under-trained reports n/a instead
  if (ping.output.find("PI score n/a") == std::string::npos) {
    const std::string rep = slurp(report);
    CHECK(rep.find("prompt_id,x_upper,x_lower,x_pi,score") != std::string::npos);
    CHECK(rep.find("heldout/persona-0,") != std::string::npos);
  }

  // eval prints per-prompt rows and a mean
  const auto ev = run("eval --suite " + suite_path.string() + " --ckpt " +
                      injected.string());
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("heldout/persona-0") != std::string::npos);
  CHECK(ev.output.find("mean") != std::string::npos);

  // the audit dump contains raw inputs only (no prompt prefix)
  const fs::path dump = work_dir() / "batches.txt";
  fs::remove(dump);
  CHECK(run("eval --suite " + suite_path.string() + " --ckpt " + injected.string() +
            " --dump-batches " + dump.string()).exit_code == 0);
  const pfi::TaskSuite suite = pfi::load_suite(suite_path.string());
  const pfi::Vocabulary vocab = pfi::persona_vocabulary();
  const std::string prompt_text = vocab.detokenize(suite.heldout_prompts[0].prompt.tokens);
  const std::string batches = slurp(dump);
  CHECK(!batches.empty());
  CHECK(batches.find(prompt_text) == std::string::npos);

  // chat answers three scripted lines and exits cleanly on EOF
  const auto chat = run("chat --ckpt " + injected.string() + " --task persona",
                        "what is your hobby ?\nwhat is your color ?\nwhat is your food ?\n");
  CHECK(chat.exit_code == 0);
  const size_t lines = static_cast<size_t>(
      std::count(chat.output.begin(), chat.output.end(), '\n'));
  CHECK(lines >= 3);

  // chat on empty stdin exits cleanly
  CHECK(run("chat --ckpt " + injected.string() + " --task persona").exit_code == 0);

  // unknown config keys are rejected (fail closed)
  const fs::path bad_cfg = work_dir() / "bad.json";
  std::ofstream(bad_cfg) << R"({"seed": 1, "typo_key": 2})";
  CHECK(run("--config " + bad_cfg.string() + " gen-task persona --out " +
            (work_dir() / "never.txt").string()).exit_code == 1);
}
