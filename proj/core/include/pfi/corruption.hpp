#pragma once

#include "pfi/rng.hpp"
#include "pfi/vocabulary.hpp"

namespace pfi {

// Span corruption of a prompt: each maximal run of masked tokens in the
// input is replaced by one sentinel; the target lists the masked spans in
// order, each preceded by its sentinel, terminated by one final sentinel.
struct CorruptionExample {
  TokenSeq corrupted_input;
  TokenSeq target;
};

struct CurriculumSchedule {
  double start_ratio = 0.15;
  double end_ratio = 0.15;
  int total_steps = 1;

  void validate() const;
};

// Masks exactly round(mask_ratio * len) tokens chosen uniformly without
// replacement (round is half-away-from-zero). Sentinel ids come from vocab.
CorruptionExample span_corrupt(const TokenSeq& prompt, double mask_ratio,
                               const Vocabulary& vocab, Rng& rng);

// Linear interpolation from start_ratio to end_ratio over total_steps;
// a single-step schedule stays at start_ratio.
double curriculum_ratio(const CurriculumSchedule& schedule, int step);

// Inverse of span_corrupt: splices the target spans back over the sentinel
// positions of corrupted_input. Used by round-trip checks.
TokenSeq splice_reconstruct(const CorruptionExample& example, const Vocabulary& vocab);

// Deterministic half-away-from-zero rounding (avoids platform variation).
int round_half_away(double x);

}  // namespace pfi
