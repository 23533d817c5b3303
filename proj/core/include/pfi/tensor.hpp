#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace pfi {

// Flat row-major tensor of doubles with an optional gradient buffer.
// Copying a Tensor copies the handle; clone() copies the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const std::vector<int>& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(s_->values.size()); }

  std::span<double> values() { return s_->values; }
  std::span<const double> values() const { return s_->values; }
  double* data() { return s_->values.data(); }
  const double* data() const { return s_->values.data(); }
  double item() const;  // value of a one-element tensor

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  bool has_grad() const { return !s_->grad.empty(); }
  // Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad() const { return s_->grad; }
  double* grad_data() { return grad().data(); }
  void zero_grad();
  void drop_grad() { s_->grad.clear(); }

  // Deep copy of values; fresh storage, no gradient, same requires_grad.
  Tensor clone() const;

  uint64_t checksum() const;  // FNV-1a over the value bytes

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until requested
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;

  explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
};

// Ordered record of executed differentiable operations. Each op pushes a
// closure that propagates the output gradient to its inputs; backward()
// replays the closures once, in reverse execution order.
class Tape {
 public:
  enum class Mode { kGrad, kNoGrad };

  explicit Tape(Mode mode = Mode::kGrad) : mode_(mode) {}

  bool recording() const { return mode_ == Mode::kGrad; }
  void record(std::function<void()> backward_step);
  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape. The loss
  // must be a scalar produced by operations recorded here.
  void backward(Tensor loss);

 private:
  Mode mode_;
  std::vector<std::function<void()>> nodes_;
};

// Free-function form of Tape::backward.
void backward(Tape& tape, Tensor loss);

bool all_finite(const Tensor& t);
void check_finite(const Tensor& t, const char* where);

// ---- differentiable primitives -------------------------------------------
// All ops validate shapes (ContractViolation on mismatch) and record their
// backward step on the tape when it is recording and an input requires grad.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
// bias [n] added to every row of a [m, n]
Tensor add_row_broadcast(Tape& tape, const Tensor& a, const Tensor& bias);
// a [m, k] x b [k, n] -> [m, n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a [m, k] x b[n, k]^T -> [m, n]
Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape& tape, const Tensor& a);
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor log_softmax_rows(Tape& tape, const Tensor& a);
Tensor layer_norm_rows(Tape& tape, const Tensor& x, const Tensor& gain,
                       const Tensor& bias, double eps = 1e-6);
Tensor embedding_lookup(Tape& tape, const Tensor& table, const std::vector<int>& ids);
Tensor slice_cols(Tape& tape, const Tensor& a, int begin, int end);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
// Elementwise a + mask, mask is a plain constant (no gradient).
Tensor add_mask(Tape& tape, const Tensor& a, const std::vector<double>& mask);
Tensor sum_all(Tape& tape, const Tensor& a);
Tensor mean_all(Tape& tape, const Tensor& a);
// Mean negative log-likelihood of target ids under softmax(logits) rows.
Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, const std::vector<int>& targets);
// Mean over rows of KL(softmax(p_logits) || softmax(q_logits)).
Tensor kl_divergence(Tape& tape, const Tensor& p_logits, const Tensor& q_logits);

}  // namespace pfi
