#include "pfi/corruption.hpp"

#include <cmath>

#include "pfi/errors.hpp"

namespace pfi {

void CurriculumSchedule::validate() const {
  if (!(start_ratio > 0.0) || start_ratio >= 1.0 || !(end_ratio > 0.0) || end_ratio >= 1.0)
    throw ContractViolation("curriculum schedule: ratios must lie in (0,1)");
  if (start_ratio > end_ratio)
    throw ContractViolation("curriculum schedule: start_ratio must not exceed end_ratio");
  if (total_steps < 1)
    throw ContractViolation("curriculum schedule: total_steps must be >= 1");
}

int round_half_away(double x) {
  return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

CorruptionExample span_corrupt(const TokenSeq& prompt, double mask_ratio,
                               const Vocabulary& vocab, Rng& rng) {
  if (prompt.empty()) throw ContractViolation("span_corrupt: empty prompt");
  if (mask_ratio < 0.0 || mask_ratio >= 1.0)
    throw ContractViolation("span_corrupt: mask_ratio must lie in [0,1)");

  const int len = static_cast<int>(prompt.size());
  const int n_mask = round_half_away(mask_ratio * len);

  // Choose n_mask positions without replacement (partial Fisher-Yates).
  std::vector<int> order(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) order[static_cast<size_t>(i)] = i;
  std::vector<bool> masked(static_cast<size_t>(len), false);
  for (int i = 0; i < n_mask; ++i) {
    const int j = i + rng.uniform_int(len - i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    masked[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;
  }

  CorruptionExample out;
  int sentinel = 0;
  int i = 0;
  while (i < len) {
    if (!masked[static_cast<size_t>(i)]) {
      out.corrupted_input.push_back(prompt[static_cast<size_t>(i)]);
      ++i;
      continue;
    }
    if (sentinel >= vocab.n_sentinels())
      throw ContractViolation("span_corrupt: sentinel block exhausted");
    out.corrupted_input.push_back(vocab.sentinel_id(sentinel));
    out.target.push_back(vocab.sentinel_id(sentinel));
    while (i < len && masked[static_cast<size_t>(i)]) {
      out.target.push_back(prompt[static_cast<size_t>(i)]);
      ++i;
    }
    ++sentinel;
  }
  if (sentinel >= vocab.n_sentinels())
    throw ContractViolation("span_corrupt: sentinel block exhausted");
  out.target.push_back(vocab.sentinel_id(sentinel));  // terminator
  return out;
}

double curriculum_ratio(const CurriculumSchedule& schedule, int step) {
  schedule.validate();
  if (step < 0 || step >= schedule.total_steps)
    throw ContractViolation("curriculum_ratio: step out of range");
  if (schedule.total_steps == 1) return schedule.start_ratio;
  const double frac = static_cast<double>(step) / (schedule.total_steps - 1);
  return schedule.start_ratio + (schedule.end_ratio - schedule.start_ratio) * frac;
}

TokenSeq splice_reconstruct(const CorruptionExample& example, const Vocabulary& vocab) {
  // Parse target into sentinel -> span.
  std::vector<std::pair<int, TokenSeq>> spans;
  size_t i = 0;
  while (i < example.target.size()) {
    const int tok = example.target[i];
    if (!vocab.is_sentinel(tok))
      throw ContractViolation("splice_reconstruct: malformed target");
    TokenSeq span;
    ++i;
    while (i < example.target.size() && !vocab.is_sentinel(example.target[i])) {
      span.push_back(example.target[i]);
      ++i;
    }
    spans.emplace_back(tok, std::move(span));
  }
  if (spans.empty() || !spans.back().second.empty())
    throw ContractViolation("splice_reconstruct: missing terminator sentinel");
  spans.pop_back();  // drop the terminator record

  size_t next_span = 0;
  TokenSeq out;
  for (int tok : example.corrupted_input) {
    if (vocab.is_sentinel(tok)) {
      if (next_span >= spans.size() || spans[next_span].first != tok)
        throw ContractViolation("splice_reconstruct: sentinel mismatch");
      const TokenSeq& span = spans[next_span].second;
      out.insert(out.end(), span.begin(), span.end());
      ++next_span;
    } else {
      out.push_back(tok);
    }
  }
  if (next_span != spans.size())
    throw ContractViolation("splice_reconstruct: unused spans");
  return out;
}

}  // namespace pfi
