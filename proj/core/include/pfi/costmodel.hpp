#pragma once

#include <string>
#include <vector>

namespace pfi {

// Analytic inference-cost geometry; defaults mirror a T5-base-sized
// encoder-decoder (the parameter count lands at ~223M with a tied
// embedding).
struct CostGeometry {
  int d_model = 768;
  int n_heads = 12;
  int d_ff = 3072;
  int n_encoder_layers = 12;
  int n_decoder_layers = 12;
  int vocab_size = 32128;
  int bytes_per_value = 4;

  void validate() const;
  double parameter_count() const;
};

enum class Strategy { kPI, kConcat, kFid, kLinear };

// One inference setting. Calibration defaults: 64 input tokens and a single
// decode step; Table-style ratios are encoder-dominated under these lengths.
struct Scenario {
  Strategy strategy = Strategy::kPI;
  int prompt_len = 0;   // tokens of fixed prompt attached to the input
  int input_len = 64;
  int output_len = 1;
  int chunk_len = 512;  // FiD chunk size
  double memory_budget_bytes = 16e9;

  void validate() const;
};

struct CostReport {
  Strategy strategy = Strategy::kPI;
  int prompt_len = 0;
  double flops = 0.0;          // extrapolated for OOM rows
  bool flops_extrapolated = false;
  double memory_bytes = 0.0;
  bool oom = false;
  double latency_seconds = 0.0;
  double flops_ratio_vs_pi = 1.0;
  double latency_ratio_vs_pi = 1.0;
};

// Multiply-add counts as 2 FLOPs; embedding lookups, layer norms and
// softmaxes are ignored as sub-percent terms.
double flops_estimate(const CostGeometry& geom, const Scenario& scenario);

// Encoder-side share of flops_estimate (per-chunk cost times chunk count
// for FiD); exposed because chunk-linearity is a tested property.
double encoder_flops(const CostGeometry& geom, const Scenario& scenario);

struct MemoryEstimate {
  double bytes = 0.0;
  bool oom = false;
};

// Peak inference footprint under the documented activation assumptions:
// parameters, per-layer attention activations retained across layers at
// batch 8 (score matrices for quadratic attention, four length x d_model
// feature buffers for linearized attention), encoder states and decoder
// KV caches. All values, times bytes_per_value.
MemoryEstimate memory_estimate(const CostGeometry& geom, const Scenario& scenario);

// Latency = FLOPs / effective device throughput. The throughput constant is
// calibrated once against a 0.7 TFLOPs / 0.58 s reference point.
double latency_estimate(double flops);

// Builds the comparison table. The scenario list must contain the PI
// baseline; rows whose memory exceeds the budget are flagged OOM and carry
// FLOPs extrapolated linearly in prompt length (proportional scaling from
// the largest non-OOM row of the same strategy).
std::vector<CostReport> cost_table(const CostGeometry& geom,
                                   const std::vector<Scenario>& scenarios);

std::string strategy_name(Strategy s);
std::string cost_table_csv(const std::vector<CostReport>& table);
std::string cost_table_text(const std::vector<CostReport>& table);

}  // namespace pfi
