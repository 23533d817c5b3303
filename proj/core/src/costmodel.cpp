#include "pfi/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pfi/errors.hpp"

namespace pfi {

namespace {

// Activation assumptions behind the memory model (documented calibration):
// profiler-style peak with a batch of 8 and per-layer attention activations
// retained across all layers.
constexpr double kActivationBatch = 8.0;
constexpr double kLinearAttnBuffers = 4.0;  // phi(Q), phi(K), V, numerator

// Effective device throughput: 0.7 TFLOPs of work in 0.58 s.
constexpr double kDeviceFlopsPerSecond = 0.7e12 / 0.58;

int fid_chunks(const Scenario& s) {
  return static_cast<int>(std::ceil(static_cast<double>(s.prompt_len) / s.chunk_len)) + 1;
}

// Total encoder token count the decoder cross-attends over.
double encoder_states(const Scenario& s) {
  switch (s.strategy) {
    case Strategy::kPI: return s.input_len;
    case Strategy::kConcat:
    case Strategy::kLinear: return s.prompt_len + s.input_len;
    case Strategy::kFid: return static_cast<double>(fid_chunks(s)) * s.chunk_len;
  }
  return 0.0;
}

}  // namespace

void CostGeometry::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || n_encoder_layers <= 0 ||
      n_decoder_layers <= 0 || vocab_size <= 0 || bytes_per_value <= 0)
    throw ContractViolation("cost geometry: all fields must be positive");
  if (d_model % n_heads != 0)
    throw ContractViolation("cost geometry: d_model must be divisible by n_heads");
}

double CostGeometry::parameter_count() const {
  const double d = d_model, ff = d_ff;
  const double embedding = static_cast<double>(vocab_size) * d;  // tied with the head
  const double enc_layer = 4.0 * d * d + 2.0 * d * ff;
  const double dec_layer = 8.0 * d * d + 2.0 * d * ff;
  return embedding + n_encoder_layers * enc_layer + n_decoder_layers * dec_layer;
}

void Scenario::validate() const {
  if (prompt_len < 0) throw ContractViolation("scenario: prompt_len must be >= 0");
  if (input_len < 1) throw ContractViolation("scenario: input_len must be >= 1");
  if (output_len < 1) throw ContractViolation("scenario: output_len must be >= 1");
  if (strategy == Strategy::kFid && chunk_len < 1)
    throw ContractViolation("scenario: FiD requires chunk_len >= 1");
  if (memory_budget_bytes <= 0)
    throw ContractViolation("scenario: memory budget must be positive");
}

namespace {

// One encoder layer on a length-n sequence.
double encoder_layer_flops(const CostGeometry& g, double n, bool linear_attention) {
  const double d = g.d_model;
  const double proj = 8.0 * n * d * d;
  const double d_head = d / g.n_heads;
  const double attn = linear_attention ? 8.0 * n * d * d_head * g.n_heads
                                       : 4.0 * n * n * d;
  const double ffn = 4.0 * n * d * g.d_ff;
  return proj + attn + ffn;
}

// Decoder: output_len incremental steps with cached self-attention plus
// cross-attention over all encoder states, then the output projection.
double decoder_flops(const CostGeometry& g, double states, double out_len) {
  const double d = g.d_model;
  const double self_proj = 8.0 * out_len * d * d;
  const double self_attn = 2.0 * d * out_len * (out_len + 1.0);
  const double cross_qo = 4.0 * out_len * d * d;
  const double cross_kv = 4.0 * states * d * d;  // one-time K/V of encoder states
  const double cross_attn = 4.0 * out_len * states * d;
  const double ffn = 4.0 * out_len * d * g.d_ff;
  const double per_layer = self_proj + self_attn + cross_qo + cross_kv + cross_attn + ffn;
  const double head = 2.0 * out_len * d * g.vocab_size;
  return g.n_decoder_layers * per_layer + head;
}

}  // namespace

double encoder_flops(const CostGeometry& geom, const Scenario& s) {
  geom.validate();
  s.validate();
  switch (s.strategy) {
    case Strategy::kPI:
      return geom.n_encoder_layers * encoder_layer_flops(geom, s.input_len, false);
    case Strategy::kConcat:
      return geom.n_encoder_layers *
             encoder_layer_flops(geom, s.prompt_len + s.input_len, false);
    case Strategy::kLinear:
      return geom.n_encoder_layers *
             encoder_layer_flops(geom, s.prompt_len + s.input_len, true);
    case Strategy::kFid:
      return static_cast<double>(fid_chunks(s)) * geom.n_encoder_layers *
             encoder_layer_flops(geom, s.chunk_len, false);
  }
  return 0.0;
}

double flops_estimate(const CostGeometry& geom, const Scenario& s) {
  return encoder_flops(geom, s) + decoder_flops(geom, encoder_states(s), s.output_len);
}

MemoryEstimate memory_estimate(const CostGeometry& geom, const Scenario& s) {
  geom.validate();
  s.validate();
  const double d = geom.d_model;
  const double bytes = geom.bytes_per_value;
  const double layers = geom.n_encoder_layers;

  double attn_activations = 0.0;
  switch (s.strategy) {
    case Strategy::kPI: {
      const double n = s.input_len;
      attn_activations = n * n * geom.n_heads * layers;
      break;
    }
    case Strategy::kConcat: {
      const double n = s.prompt_len + s.input_len;
      attn_activations = n * n * geom.n_heads * layers;
      break;
    }
    case Strategy::kFid: {
      const double c = s.chunk_len;
      attn_activations = fid_chunks(s) * c * c * geom.n_heads * layers;
      break;
    }
    case Strategy::kLinear: {
      const double n = s.prompt_len + s.input_len;
      attn_activations = kLinearAttnBuffers * n * d * layers;
      break;
    }
  }

  const double states = encoder_states(s);
  const double encoder_cache = states * d;                            // decoder reads these
  const double cross_kv_cache = 2.0 * states * d * geom.n_decoder_layers;
  const double self_kv_cache = 2.0 * s.output_len * d * geom.n_decoder_layers;

  MemoryEstimate out;
  out.bytes = bytes * (geom.parameter_count() +
                       kActivationBatch * (attn_activations + encoder_cache +
                                           cross_kv_cache + self_kv_cache));
  out.oom = out.bytes > s.memory_budget_bytes;
  return out;
}

double latency_estimate(double flops) { return flops / kDeviceFlopsPerSecond; }

std::vector<CostReport> cost_table(const CostGeometry& geom,
                                   const std::vector<Scenario>& scenarios) {
  bool has_pi = false;
  for (const Scenario& s : scenarios)
    if (s.strategy == Strategy::kPI) has_pi = true;
  if (!has_pi)
    throw ContractViolation("cost_table: scenarios must include the PI baseline");

  std::vector<CostReport> table;
  table.reserve(scenarios.size());
  for (const Scenario& s : scenarios) {
    CostReport r;
    r.strategy = s.strategy;
    r.prompt_len = s.prompt_len;
    const MemoryEstimate mem = memory_estimate(geom, s);
    r.memory_bytes = mem.bytes;
    r.oom = mem.oom;
    r.flops = flops_estimate(geom, s);
    table.push_back(r);
  }

  // OOM rows: assume FLOPs grow linearly with prompt length and scale from
  // the largest feasible row of the same strategy.
  for (size_t i = 0; i < table.size(); ++i) {
    if (!table[i].oom) continue;
    double best_len = 0.0, best_flops = 0.0;
    for (size_t j = 0; j < table.size(); ++j) {
      if (j == i || table[j].oom || table[j].strategy != table[i].strategy) continue;
      if (table[j].prompt_len > best_len) {
        best_len = table[j].prompt_len;
        best_flops = table[j].flops;
      }
    }
    if (best_len > 0.0 && table[i].prompt_len > 0) {
      table[i].flops = best_flops * (static_cast<double>(table[i].prompt_len) / best_len);
      table[i].flops_extrapolated = true;
    }
  }

  double pi_flops = 0.0;
  for (const CostReport& r : table)
    if (r.strategy == Strategy::kPI) pi_flops = r.flops;
  for (CostReport& r : table) {
    r.latency_seconds = latency_estimate(r.flops);
    r.flops_ratio_vs_pi = r.flops / pi_flops;
    r.latency_ratio_vs_pi = r.latency_seconds / latency_estimate(pi_flops);
  }
  return table;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kPI: return "PI";
    case Strategy::kConcat: return "CONCAT";
    case Strategy::kFid: return "FID";
    case Strategy::kLinear: return "LINEAR";
  }
  return "?";
}

std::string cost_table_csv(const std::vector<CostReport>& table) {
  std::ostringstream os;
  os << "strategy,prompt_len,tflops,flops_ratio_vs_pi,extrapolated,memory_gb,oom,"
        "latency_s,latency_ratio_vs_pi\n";
  for (const CostReport& r : table) {
    os << strategy_name(r.strategy) << ',' << r.prompt_len << ',' << r.flops / 1e12
       << ',' << r.flops_ratio_vs_pi << ',' << (r.flops_extrapolated ? 1 : 0) << ','
       << r.memory_bytes / 1e9 << ',' << (r.oom ? 1 : 0) << ',';
    if (r.oom)
      os << ',';
    else
      os << r.latency_seconds << ',' << r.latency_ratio_vs_pi;
    os << '\n';
  }
  return os.str();
}

std::string cost_table_text(const std::vector<CostReport>& table) {
  std::ostringstream os;
  char line[160];
  os << "Model     Prompt Length   FLOPs (T)          Latency (s)\n";
  for (const CostReport& r : table) {
    std::string flops_col;
    {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f (x%.1f)%s", r.flops / 1e12,
                    r.flops_ratio_vs_pi, r.flops_extrapolated ? "*" : "");
      flops_col = buf;
    }
    std::string lat_col = "-";
    if (!r.oom) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f (x%.1f)", r.latency_seconds,
                    r.latency_ratio_vs_pi);
      lat_col = buf;
    }
    std::string len_col = r.strategy == Strategy::kPI ? "*" : std::to_string(r.prompt_len);
    if (r.oom) flops_col = "OOM " + flops_col;
    std::snprintf(line, sizeof(line), "%-9s %-15s %-18s %s\n",
                  strategy_name(r.strategy).c_str(), len_col.c_str(), flops_col.c_str(),
                  lat_col.c_str());
    os << line;
  }
  os << "* extrapolated assuming FLOPs linear in prompt length\n";
  return os.str();
}

}  // namespace pfi
