#include "pfi/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pfi/errors.hpp"

namespace pfi {

void adam_step(ParamMap& params, AdamState& state) {
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, param] : params) {
    if (!param.has_grad()) continue;
    auto& mom = state.moments[name];
    const size_t n = static_cast<size_t>(param.size());
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    if (mom.m.size() != n)
      throw ContractViolation("adam_step: moment shape mismatch for " + name);
    if (param.grad().size() != n)
      throw ContractViolation("adam_step: gradient shape mismatch for " + name);
    double* p = param.data();
    const double* g = param.grad().data();
    for (size_t i = 0; i < n; ++i) {
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g[i];
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double grad_check(const std::function<Tensor(Tape&)>& fn, ParamMap& params,
                  double epsilon) {
  if (epsilon <= 0.0) throw ContractViolation("grad_check: epsilon must be positive");
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape tape;
  Tensor loss = fn(tape);
  if (loss.size() != 1) throw ContractViolation("grad_check: fn must return a scalar");
  tape.backward(loss);

  double worst = 0.0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto analytic = p.grad();
    double* vals = p.data();
    for (int64_t i = 0; i < p.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + epsilon;
      Tape t_plus(Tape::Mode::kNoGrad);
      const double f_plus = fn(t_plus).item();
      vals[i] = keep - epsilon;
      Tape t_minus(Tape::Mode::kNoGrad);
      const double f_minus = fn(t_minus).item();
      vals[i] = keep;
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = analytic[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace pfi
