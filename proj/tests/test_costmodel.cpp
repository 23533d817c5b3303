#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pfi/costmodel.hpp"
#include "pfi/errors.hpp"

using namespace pfi;

namespace {

Scenario make(Strategy s, int prompt_len) {
  Scenario sc;
  sc.strategy = s;
  sc.prompt_len = prompt_len;
  return sc;
}

std::vector<Scenario> table_one_scenarios() {
  std::vector<Scenario> out;
  out.push_back(make(Strategy::kPI, 0));
  for (int mult : {1, 2, 4}) out.push_back(make(Strategy::kConcat, 512 * mult));
  for (int mult : {1, 2, 4, 8, 28}) out.push_back(make(Strategy::kFid, 512 * mult));
  for (int mult : {1, 2, 4, 8, 28}) out.push_back(make(Strategy::kLinear, 512 * mult));
  return out;
}

}  // namespace

TEST_CASE("geometry defaults land at roughly 220M parameters") {
  CostGeometry g;
  CHECK(g.parameter_count() / 1e6 == doctest::Approx(223.0).epsilon(0.02));
  g.d_model = 769;
  CHECK_THROWS_AS(g.validate(), ContractViolation);
}

TEST_CASE("PI flops and memory are exactly constant in prompt length") {
  CostGeometry g;
  Scenario a = make(Strategy::kPI, 0);
  Scenario b = make(Strategy::kPI, 512 * 28);
  CHECK(flops_estimate(g, a) == flops_estimate(g, b));
  CHECK(memory_estimate(g, a).bytes == memory_estimate(g, b).bytes);
}

TEST_CASE("zero-length prompt makes CONCAT coincide with PI") {
  CostGeometry g;
  CHECK(flops_estimate(g, make(Strategy::kConcat, 0)) ==
        flops_estimate(g, make(Strategy::kPI, 0)));
}

TEST_CASE("FiD encoder cost is exactly linear in chunk count") {
  CostGeometry g;
  const double e512 = encoder_flops(g, make(Strategy::kFid, 512));    // 2 chunks
  const double e1024 = encoder_flops(g, make(Strategy::kFid, 1024));  // 3 chunks
  CHECK(e1024 / e512 == doctest::Approx(3.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("CONCAT flops are strictly increasing and superlinear in prompt length") {
  CostGeometry g;
  const double f512 = flops_estimate(g, make(Strategy::kConcat, 512));
  const double f1024 = flops_estimate(g, make(Strategy::kConcat, 1024));
  const double f2048 = flops_estimate(g, make(Strategy::kConcat, 2048));
  CHECK(f512 < f1024);
  CHECK(f1024 < f2048);
  CHECK((f2048 - f1024) > (f1024 - f512));  // positive second difference
}

TEST_CASE("FiD and LINEAR doubling ratios approach two") {
  CostGeometry g;
  for (Strategy s : {Strategy::kFid, Strategy::kLinear}) {
    const double f4 = flops_estimate(g, make(s, 2048));
    const double f8 = flops_estimate(g, make(s, 4096));
    CHECK(f8 / f4 == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("calibration ratios reproduce the reference table") {
  CostGeometry g;
  const auto table = cost_table(g, table_one_scenarios());
  auto row = [&](Strategy s, int len) -> const CostReport& {
    for (const auto& r : table)
      if (r.strategy == s && r.prompt_len == len) return r;
    throw std::runtime_error("row not found");
  };
  CHECK(row(Strategy::kPI, 0).flops_ratio_vs_pi == doctest::Approx(1.0));
  const double c512 = row(Strategy::kConcat, 512).flops_ratio_vs_pi;
  const double c1024 = row(Strategy::kConcat, 1024).flops_ratio_vs_pi;
  CHECK(c512 >= 8.0);
  CHECK(c512 <= 13.0);
  CHECK(c1024 >= 17.0);
  CHECK(c1024 <= 25.0);
  const double f4 = row(Strategy::kFid, 2048).flops_ratio_vs_pi;
  const double f8 = row(Strategy::kFid, 4096).flops_ratio_vs_pi;
  CHECK(f8 / f4 >= 1.7);
  CHECK(f8 / f4 <= 2.3);
  // linear attention costs slightly more than naive concatenation at 512
  const double l512 = row(Strategy::kLinear, 512).flops_ratio_vs_pi;
  CHECK(l512 > c512);
  CHECK(l512 < 2.0 * c512);
}

TEST_CASE("OOM pattern matches the documented activation assumptions") {
  CostGeometry g;
  const auto table = cost_table(g, table_one_scenarios());
  auto oom = [&](Strategy s, int len) {
    for (const auto& r : table)
      if (r.strategy == s && r.prompt_len == len) return r.oom;
    throw std::runtime_error("row not found");
  };
  CHECK(!oom(Strategy::kPI, 0));
  CHECK(!oom(Strategy::kConcat, 512));
  CHECK(!oom(Strategy::kConcat, 1024));
  CHECK(oom(Strategy::kConcat, 2048));
  CHECK(!oom(Strategy::kFid, 4096));
  CHECK(oom(Strategy::kFid, 512 * 28));
  CHECK(!oom(Strategy::kLinear, 4096));
  CHECK(oom(Strategy::kLinear, 512 * 28));
}

TEST_CASE("OOM rows carry linear extrapolations near the documented scale") {
  CostGeometry g;
  const auto table = cost_table(g, table_one_scenarios());
  for (const auto& r : table) {
    if (r.strategy == Strategy::kFid && r.prompt_len == 512 * 28) {
      CHECK(r.flops_extrapolated);
      CHECK(r.flops_ratio_vs_pi >= 280.0 * 0.85);
      CHECK(r.flops_ratio_vs_pi <= 280.0 * 1.15);
    }
  }
}

TEST_CASE("halving bytes_per_value halves memory") {
  CostGeometry g;
  const Scenario s = make(Strategy::kConcat, 1024);
  const double full = memory_estimate(g, s).bytes;
  CostGeometry half = g;
  half.bytes_per_value = 2;
  CHECK(memory_estimate(half, s).bytes == doctest::Approx(full / 2.0).epsilon(1e-12));
}

TEST_CASE("latency ordering follows flops and PI is fastest") {
  CostGeometry g;
  const auto table = cost_table(g, table_one_scenarios());
  double pi_latency = 0.0;
  for (const auto& r : table)
    if (r.strategy == Strategy::kPI) pi_latency = r.latency_seconds;
  double prev = 0.0;
  for (const auto& r : table) {
    if (r.strategy != Strategy::kConcat) continue;
    CHECK(r.latency_seconds > pi_latency);
    CHECK(r.latency_seconds > prev);
    prev = r.latency_seconds;
  }
}

TEST_CASE("cost_table requires the PI baseline") {
  CostGeometry g;
  std::vector<Scenario> scenarios{make(Strategy::kConcat, 512)};
  CHECK_THROWS_AS(cost_table(g, scenarios), ContractViolation);
  const auto only_pi = cost_table(g, {make(Strategy::kPI, 0)});
  REQUIRE(only_pi.size() == 1);
  CHECK(only_pi[0].flops_ratio_vs_pi == doctest::Approx(1.0));
}

TEST_CASE("csv and text writers emit every row") {
  CostGeometry g;
  const auto table = cost_table(g, table_one_scenarios());
  const std::string csv = cost_table_csv(table);
  const std::string text = cost_table_text(table);
  size_t csv_lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(csv_lines == table.size() + 1);  // header
  CHECK(text.find("OOM") != std::string::npos);
  CHECK(text.find("PI") != std::string::npos);
  CHECK(csv.find("FID") != std::string::npos);
}

TEST_CASE("scenario validation") {
  Scenario s;
  s.input_len = 0;
  CHECK_THROWS_AS(s.validate(), ContractViolation);
  s = Scenario{};
  s.strategy = Strategy::kFid;
  s.chunk_len = 0;
  CHECK_THROWS_AS(s.validate(), ContractViolation);
}
