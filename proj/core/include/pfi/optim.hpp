#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pfi/tensor.hpp"

namespace pfi {

// Per-parameter Adam moments plus hyperparameters. Parameters are keyed by
// name; moment buffers are created lazily on the first step and must keep
// matching their parameter's shape afterwards.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;

  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
};

using ParamMap = std::map<std::string, Tensor>;

// One Adam update with bias correction over every parameter that has a
// gradient buffer. Parameters without gradients are skipped (their moments
// are not advanced either). Increments step_count once.
void adam_step(ParamMap& params, AdamState& state);

// Max over all parameter coordinates of the relative error between the tape
// gradient of fn and a central finite difference. fn must be deterministic
// and must evaluate the loss using the given parameters through the tape.
double grad_check(const std::function<Tensor(Tape&)>& fn, ParamMap& params,
                  double epsilon = 1e-5);

}  // namespace pfi
