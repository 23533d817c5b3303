#include "pfi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "pfi/errors.hpp"

namespace pfi {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ContractViolation("tensor dimension must be non-negative");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  int64_t n = shape_numel(shape);
  s->shape = std::move(shape);
  s->values.assign(static_cast<size_t>(n), 0.0);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.s_->values.begin(), t.s_->values.end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ContractViolation("value count does not match shape");
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() requires a one-element tensor");
  return s_->values[0];
}

std::span<double> Tensor::grad() {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() {
  if (s_->grad.empty())
    s_->grad.assign(s_->values.size(), 0.0);
  else
    std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto s = std::make_shared<Storage>();
  s->shape = s_->shape;
  s->values = s_->values;
  s->requires_grad = s_->requires_grad;
  return Tensor(std::move(s));
}

uint64_t Tensor::checksum() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : s_->values) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void Tape::record(std::function<void()> backward_step) {
  if (recording()) nodes_.push_back(std::move(backward_step));
}

void Tape::backward(Tensor loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractViolation("backward requires a scalar loss");
  if (!recording())
    throw ContractViolation("backward on a no-grad tape");
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void backward(Tape& tape, Tensor loss) { tape.backward(std::move(loss)); }

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& t, const char* where) {
  if (!all_finite(t))
    throw ContractViolation(std::string("non-finite value produced in ") + where);
}

// ---- op helpers ------------------------------------------------------------

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}

bool wants_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

// c[m,n] += a[m,k] * b[k,n]
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<int64_t>(i) * k;
    double* crow = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T  (rows of b are contracted against rows of a)
void mm_bt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<int64_t>(i) * k;
    double* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<int64_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void mm_at_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<int64_t>(i) * k;
    const double* brow = b + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_2d(const Tensor& t, const char* msg) { require(t.rank() == 2, msg); }

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  bool rg = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  if (rg) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      auto g = oc.grad();
      if (ac.requires_grad()) {
        auto ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        auto gb = bc.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  bool rg = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] - pb[i];
  if (rg) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      auto g = oc.grad();
      if (ac.requires_grad()) {
        auto ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        auto gb = bc.grad();
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  bool rg = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
  if (rg) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      auto g = oc.grad();
      if (ac.requires_grad()) {
        auto ga = ac.grad();
        const double* vb = bc.data();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (bc.requires_grad()) {
        auto gb = bc.grad();
        const double* va = ac.data();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * c;
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, c]() mutable {
      auto g = oc.grad();
      auto ga = ac.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor add_row_broadcast(Tape& tape, const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_row_broadcast: a must be 2-d");
  require(bias.rank() == 1 && bias.dim(0) == a.dim(1),
          "add_row_broadcast: bias length must equal column count");
  bool rg = wants_grad(tape, {&a, &bias});
  Tensor out = make_output(a.shape(), rg);
  const int m = a.dim(0), n = a.dim(1);
  const double* pa = a.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[i * n + j] = pa[i * n + j] + pb[j];
  if (rg) {
    Tensor ac = a, bc = bias, oc = out;
    tape.record([ac, bc, oc, m, n]() mutable {
      auto g = oc.grad();
      if (ac.requires_grad()) {
        auto ga = ac.grad();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        auto gb = bc.grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[j] += g[static_cast<size_t>(i) * n + j];
      }
    });
  }
  return out;
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul: a must be 2-d");
  require_2d(b, "matmul: b must be 2-d");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bool rg = wants_grad(tape, {&a, &b});
  Tensor out = make_output({m, n}, rg);
  mm_acc(a.data(), b.data(), out.data(), m, k, n);
  if (rg) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (ac.requires_grad())
        mm_bt_acc(g, bc.data(), ac.grad_data(), m, n, k);  // dA += dC * B^T
      if (bc.requires_grad())
        mm_at_acc(ac.data(), g, bc.grad_data(), m, k, n);  // dB += A^T * dC
    });
  }
  return out;
}

Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_bt: a must be 2-d");
  require_2d(b, "matmul_bt: b must be 2-d");
  require(a.dim(1) == b.dim(1), "matmul_bt: contraction dimensions differ");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  bool rg = wants_grad(tape, {&a, &b});
  Tensor out = make_output({m, n}, rg);
  mm_bt_acc(a.data(), b.data(), out.data(), m, k, n);
  if (rg) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (ac.requires_grad())
        mm_acc(g, bc.data(), ac.grad_data(), m, n, k);  // dA += dC * B
      if (bc.requires_grad())
        mm_at_acc(g, ac.data(), bc.grad_data(), m, n, k);  // dB += dC^T * A
    });
  }
  return out;
}

// ---- nonlinearities --------------------------------------------------------

Tensor relu(Tape& tape, const Tensor& a) {
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      auto g = oc.grad();
      auto ga = ac.grad();
      const double* va = ac.data();
      for (size_t i = 0; i < g.size(); ++i)
        if (va[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  require_2d(a, "softmax_rows: input must be 2-d");
  const int m = a.dim(0), n = a.dim(1);
  require(n >= 1, "softmax_rows: empty rows");
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    const double* row = pa + static_cast<int64_t>(i) * n;
    double* orow = po + static_cast<int64_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) orow[j] *= inv;
  }
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, m, n]() mutable {
      const double* y = oc.data();
      const double* g = oc.grad().data();
      double* ga = ac.grad_data();
      for (int i = 0; i < m; ++i) {
        const int64_t off = static_cast<int64_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
        for (int j = 0; j < n; ++j) ga[off + j] += (g[off + j] - dot) * y[off + j];
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(Tape& tape, const Tensor& a) {
  require_2d(a, "log_softmax_rows: input must be 2-d");
  const int m = a.dim(0), n = a.dim(1);
  require(n >= 1, "log_softmax_rows: empty rows");
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    const double* row = pa + static_cast<int64_t>(i) * n;
    double* orow = po + static_cast<int64_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) orow[j] = row[j] - lse;
  }
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, m, n]() mutable {
      const double* ly = oc.data();
      const double* g = oc.grad().data();
      double* ga = ac.grad_data();
      for (int i = 0; i < m; ++i) {
        const int64_t off = static_cast<int64_t>(i) * n;
        double gsum = 0.0;
        for (int j = 0; j < n; ++j) gsum += g[off + j];
        for (int j = 0; j < n; ++j)
          ga[off + j] += g[off + j] - std::exp(ly[off + j]) * gsum;
      }
    });
  }
  return out;
}

Tensor layer_norm_rows(Tape& tape, const Tensor& x, const Tensor& gain,
                       const Tensor& bias, double eps) {
  require_2d(x, "layer_norm_rows: input must be 2-d");
  const int m = x.dim(0), n = x.dim(1);
  require(gain.rank() == 1 && gain.dim(0) == n, "layer_norm_rows: gain shape");
  require(bias.rank() == 1 && bias.dim(0) == n, "layer_norm_rows: bias shape");
  bool rg = wants_grad(tape, {&x, &gain, &bias});
  Tensor out = make_output(x.shape(), rg);
  // Cache normalized rows and inverse stddev for backward.
  Tensor xhat = Tensor::zeros(x.shape());
  Tensor inv_sd = Tensor::zeros({m});
  const double* px = x.data();
  const double* pg = gain.data();
  const double* pb = bias.data();
  double* po = out.data();
  double* ph = xhat.data();
  double* pi = inv_sd.data();
  for (int i = 0; i < m; ++i) {
    const int64_t off = static_cast<int64_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += px[off + j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = px[off + j] - mean;
      var += d * d;
    }
    var /= n;
    const double isd = 1.0 / std::sqrt(var + eps);
    pi[i] = isd;
    for (int j = 0; j < n; ++j) {
      const double h = (px[off + j] - mean) * isd;
      ph[off + j] = h;
      po[off + j] = h * pg[j] + pb[j];
    }
  }
  if (rg) {
    Tensor xc = x, gc = gain, bc = bias, oc = out;
    tape.record([xc, gc, bc, oc, xhat, inv_sd, m, n]() mutable {
      const double* g = oc.grad().data();
      const double* ph = xhat.data();
      const double* pi = inv_sd.data();
      const double* pg = gc.data();
      if (gc.requires_grad()) {
        double* gg = gc.grad_data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            gg[j] += g[static_cast<int64_t>(i) * n + j] * ph[static_cast<int64_t>(i) * n + j];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad_data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[j] += g[static_cast<int64_t>(i) * n + j];
      }
      if (xc.requires_grad()) {
        double* gx = xc.grad_data();
        for (int i = 0; i < m; ++i) {
          const int64_t off = static_cast<int64_t>(i) * n;
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (int j = 0; j < n; ++j) {
            const double dh = g[off + j] * pg[j];
            sum_dh += dh;
            sum_dh_h += dh * ph[off + j];
          }
          const double inv_n = 1.0 / n;
          for (int j = 0; j < n; ++j) {
            const double dh = g[off + j] * pg[j];
            gx[off + j] += pi[i] * (dh - inv_n * sum_dh - ph[off + j] * inv_n * sum_dh_h);
          }
        }
      }
    });
  }
  return out;
}

// ---- gather / structure ----------------------------------------------------

Tensor embedding_lookup(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup: table must be 2-d");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    require(id >= 0 && id < v, "embedding_lookup: id out of range");
  const int m = static_cast<int>(ids.size());
  bool rg = wants_grad(tape, {&table});
  Tensor out = make_output({m, d}, rg);
  const double* pt = table.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i)
    std::memcpy(po + static_cast<int64_t>(i) * d,
                pt + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d,
                sizeof(double) * static_cast<size_t>(d));
  if (rg) {
    Tensor tc = table, oc = out;
    std::vector<int> idc = ids;
    tape.record([tc, oc, idc, d]() mutable {
      const double* g = oc.grad().data();
      double* gt = tc.grad_data();
      for (size_t i = 0; i < idc.size(); ++i) {
        double* row = gt + static_cast<int64_t>(idc[i]) * d;
        const double* grow = g + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) row[j] += grow[j];
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, int begin, int end) {
  require_2d(a, "slice_cols: input must be 2-d");
  const int m = a.dim(0), n = a.dim(1);
  require(begin >= 0 && begin < end && end <= n, "slice_cols: bad column range");
  const int w = end - begin;
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output({m, w}, rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i)
    std::memcpy(po + static_cast<int64_t>(i) * w,
                pa + static_cast<int64_t>(i) * n + begin,
                sizeof(double) * static_cast<size_t>(w));
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, begin, w, n, m]() mutable {
      const double* g = oc.grad().data();
      double* ga = ac.grad_data();
      for (int i = 0; i < m; ++i) {
        double* row = ga + static_cast<int64_t>(i) * n + begin;
        const double* grow = g + static_cast<int64_t>(i) * w;
        for (int j = 0; j < w; ++j) row[j] += grow[j];
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int m = parts.front().dim(0);
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.dim(0) == m, "concat_cols: row counts differ");
    total += p.dim(1);
    rg = rg || (tape.recording() && p.requires_grad());
  }
  Tensor out = make_output({m, total}, rg);
  double* po = out.data();
  int col = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    const double* pp = p.data();
    for (int i = 0; i < m; ++i)
      std::memcpy(po + static_cast<int64_t>(i) * total + col,
                  pp + static_cast<int64_t>(i) * w,
                  sizeof(double) * static_cast<size_t>(w));
    col += w;
  }
  if (rg) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape.record([pc, oc, m, total]() mutable {
      const double* g = oc.grad().data();
      int col = 0;
      for (Tensor& p : pc) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          double* gp = p.grad_data();
          for (int i = 0; i < m; ++i) {
            const double* grow = g + static_cast<int64_t>(i) * total + col;
            double* prow = gp + static_cast<int64_t>(i) * w;
            for (int j = 0; j < w; ++j) prow[j] += grow[j];
          }
        }
        col += w;
      }
    });
  }
  return out;
}

Tensor add_mask(Tape& tape, const Tensor& a, const std::vector<double>& mask) {
  require(static_cast<int64_t>(mask.size()) == a.size(), "add_mask: size mismatch");
  bool rg = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), rg);
  const double* pa = a.data();
  double* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + mask[static_cast<size_t>(i)];
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      auto g = oc.grad();
      auto ga = ac.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

// ---- reductions / losses ---------------------------------------------------

Tensor sum_all(Tape& tape, const Tensor& a) {
  bool rg = wants_grad(tape, {&a});
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s, rg);
  if (rg) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double g = oc.grad()[0];
      auto ga = ac.grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
  require(a.size() > 0, "mean_all: empty tensor");
  Tensor s = sum_all(tape, a);
  return scale(tape, s, 1.0 / static_cast<double>(a.size()));
}

Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, const std::vector<int>& targets) {
  require_2d(logits, "cross_entropy_mean: logits must be 2-d");
  require(!targets.empty(), "cross_entropy_mean: empty target");
  require(logits.dim(0) == static_cast<int>(targets.size()),
          "cross_entropy_mean: row count must equal target count");
  const int m = logits.dim(0), n = logits.dim(1);
  for (int t : targets)
    require(t >= 0 && t < n, "cross_entropy_mean: target id out of range");
  bool rg = wants_grad(tape, {&logits});
  // Stable: loss_i = lse(row_i) - row_i[t_i]
  Tensor probs = Tensor::zeros(logits.shape());  // softmax cache for backward
  double total = 0.0;
  const double* pl = logits.data();
  double* pp = probs.data();
  for (int i = 0; i < m; ++i) {
    const int64_t off = static_cast<int64_t>(i) * n;
    double mx = pl[off];
    for (int j = 1; j < n; ++j) mx = std::max(mx, pl[off + j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      pp[off + j] = std::exp(pl[off + j] - mx);
      sum += pp[off + j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) pp[off + j] *= inv;
    total += mx + std::log(sum) - pl[off + targets[static_cast<size_t>(i)]];
  }
  Tensor out = Tensor::scalar(total / m, rg);
  if (rg) {
    Tensor lc = logits, oc = out;
    std::vector<int> tc = targets;
    tape.record([lc, oc, probs, tc, m, n]() mutable {
      const double g = oc.grad()[0] / m;
      double* gl = lc.grad_data();
      const double* pp = probs.data();
      for (int i = 0; i < m; ++i) {
        const int64_t off = static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) gl[off + j] += g * pp[off + j];
        gl[off + tc[static_cast<size_t>(i)]] -= g;
      }
    });
  }
  return out;
}

Tensor kl_divergence(Tape& tape, const Tensor& p_logits, const Tensor& q_logits) {
  require(p_logits.shape() == q_logits.shape(), "kl_divergence: shape mismatch");
  require_2d(p_logits, "kl_divergence: logits must be 2-d");
  const int m = p_logits.dim(0), n = p_logits.dim(1);
  require(m >= 1 && n >= 1, "kl_divergence: empty input");
  bool rg = wants_grad(tape, {&p_logits, &q_logits});
  Tensor p_soft = Tensor::zeros(p_logits.shape());
  Tensor q_soft = Tensor::zeros(q_logits.shape());
  Tensor p_log = Tensor::zeros(p_logits.shape());
  Tensor q_log = Tensor::zeros(q_logits.shape());
  auto fill = [n](const double* in, double* soft, double* logp, int row) {
    const int64_t off = static_cast<int64_t>(row) * n;
    double mx = in[off];
    for (int j = 1; j < n; ++j) mx = std::max(mx, in[off + j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(in[off + j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) {
      logp[off + j] = in[off + j] - lse;
      soft[off + j] = std::exp(logp[off + j]);
    }
  };
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    fill(p_logits.data(), p_soft.data(), p_log.data(), i);
    fill(q_logits.data(), q_soft.data(), q_log.data(), i);
    const int64_t off = static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j)
      total += p_soft.data()[off + j] * (p_log.data()[off + j] - q_log.data()[off + j]);
  }
  Tensor out = Tensor::scalar(total / m, rg);
  if (rg) {
    Tensor pc = p_logits, qc = q_logits, oc = out;
    tape.record([pc, qc, oc, p_soft, q_soft, p_log, q_log, m, n]() mutable {
      const double g = oc.grad()[0] / m;
      if (qc.requires_grad()) {
        // d/dq_j KL = softmax(q)_j - softmax(p)_j  (per row)
        double* gq = qc.grad_data();
        const double* ps = p_soft.data();
        const double* qs = q_soft.data();
        for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i)
          gq[i] += g * (qs[i] - ps[i]);
      }
      if (pc.requires_grad()) {
        // d/dp_j KL = softmax(p)_j * (log p_j - log q_j - KL_row)
        double* gp = pc.grad_data();
        const double* ps = p_soft.data();
        const double* pl = p_log.data();
        const double* ql = q_log.data();
        for (int i = 0; i < m; ++i) {
          const int64_t off = static_cast<int64_t>(i) * n;
          double row_kl = 0.0;
          for (int j = 0; j < n; ++j) row_kl += ps[off + j] * (pl[off + j] - ql[off + j]);
          for (int j = 0; j < n; ++j)
            gp[off + j] += g * ps[off + j] * (pl[off + j] - ql[off + j] - row_kl);
        }
      }
    });
  }
  return out;
}

}  // namespace pfi
