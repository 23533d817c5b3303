#include <benchmark/benchmark.h>

#include "pfi/corruption.hpp"
#include "pfi/costmodel.hpp"
#include "pfi/model.hpp"
#include "pfi/optim.hpp"
#include "pfi/tasks.hpp"

namespace {

pfi::ModelConfig desk_config() {
  pfi::ModelConfig c;
  c.vocab_size = 300;
  c.d_model = 64;
  c.n_heads = 4;
  c.d_ff = 256;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 2;
  c.max_seq_len = 64;
  c.n_sentinels = 48;
  return c;
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  pfi::Rng rng(1);
  pfi::Tensor a = pfi::Tensor::zeros({n, n});
  pfi::Tensor b = pfi::Tensor::zeros({n, n});
  for (double& v : a.values()) v = rng.normal(0.0, 1.0);
  for (double& v : b.values()) v = rng.normal(0.0, 1.0);
  pfi::Tape tape(pfi::Tape::Mode::kNoGrad);
  for (auto _ : state) {
    pfi::Tensor c = pfi::matmul(tape, a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_ForwardTeacherForced(benchmark::State& state) {
  pfi::Rng rng(2);
  pfi::TransformerLM model = pfi::TransformerLM::init(desk_config(), rng);
  pfi::TokenSeq src(40, 60), tgt(8, 70);
  pfi::Tape tape(pfi::Tape::Mode::kNoGrad);
  for (auto _ : state) {
    pfi::Tensor logits = model.forward_teacher_forced(tape, src, tgt);
    benchmark::DoNotOptimize(logits.data());
  }
}
BENCHMARK(BM_ForwardTeacherForced);

void BM_TrainStep(benchmark::State& state) {
  pfi::Rng rng(3);
  pfi::TransformerLM model = pfi::TransformerLM::init(desk_config(), rng);
  pfi::AdamState opt;
  opt.learning_rate = 1e-3;
  pfi::TokenSeq src(40, 60), tgt(8, 70);
  for (auto _ : state) {
    model.zero_grads();
    pfi::Tape tape;
    pfi::Tensor loss = model.sequence_loss(tape, src, tgt);
    tape.backward(loss);
    pfi::adam_step(model.params(), opt);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStep);

void BM_SpanCorrupt(benchmark::State& state) {
  const pfi::Vocabulary vocab = pfi::persona_vocabulary();
  pfi::TokenSeq prompt(60);
  for (size_t i = 0; i < prompt.size(); ++i)
    prompt[i] = vocab.n_sentinels() + 3 + static_cast<int>(i % 50);
  pfi::Rng rng(4);
  for (auto _ : state) {
    auto ex = pfi::span_corrupt(prompt, 0.15, vocab, rng);
    benchmark::DoNotOptimize(ex.target.data());
  }
}
BENCHMARK(BM_SpanCorrupt);

void BM_CostTable(benchmark::State& state) {
  pfi::CostGeometry geom;
  std::vector<pfi::Scenario> scenarios;
  pfi::Scenario pi;
  scenarios.push_back(pi);
  for (int mult : {1, 2, 4, 8, 28}) {
    pfi::Scenario s;
    s.strategy = pfi::Strategy::kFid;
    s.prompt_len = 512 * mult;
    scenarios.push_back(s);
  }
  for (auto _ : state) {
    auto table = pfi::cost_table(geom, scenarios);
    benchmark::DoNotOptimize(table.data());
  }
}
BENCHMARK(BM_CostTable);

}  // namespace

BENCHMARK_MAIN();
