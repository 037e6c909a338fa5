#include "tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace iadvtext {

namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};

// Fixed-order ikj matmul: every output element accumulates over k in
// ascending order, so results are bit-identical to a naive triple loop.
void matmul_accum(const double* a, const double* b, double* c, int m, int k,
                  int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
void matmul_bt_accum(const double* a, const double* b, double* c, int m, int n,
                     int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * n;
    double* crow = c + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* brow = b + static_cast<size_t>(j) * n;
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += arow[t] * brow[t];
      crow[j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void matmul_at_accum(const double* a, const double* b, double* c, int m, int k,
                     int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      double* crow = c + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
}

double Tensor::scalar() const {
  if (!is_scalar()) fail_runtime("scalar() on tensor of shape " + shape_str());
  return values[0];
}

std::vector<double> Tensor::grad_or_zero() const {
  if (grad.empty()) return std::vector<double>(values.size(), 0.0);
  return grad;
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t.values))
    fail_runtime(std::string("non-finite values in ") + what);
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

TensorPtr Tape::make(int rows, int cols) {
  auto t = std::make_shared<Tensor>();
  t->rows = rows;
  t->cols = cols;
  t->values.assign(static_cast<size_t>(rows) * cols, 0.0);
  t->tape_id = id_;
  return t;
}

TensorPtr Tape::leaf(int rows, int cols, std::vector<double> values,
                     bool requires_grad) {
  if (static_cast<int>(values.size()) != rows * cols)
    fail_runtime("leaf: value count " + std::to_string(values.size()) +
                 " does not match shape [" + std::to_string(rows) + "," +
                 std::to_string(cols) + "]");
  auto t = make(rows, cols);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  tracked_.push_back(t);
  return t;
}

TensorPtr Tape::constant(int rows, int cols, std::vector<double> values) {
  return leaf(rows, cols, std::move(values), false);
}

TensorPtr Tape::zeros(int rows, int cols, bool requires_grad) {
  auto t = make(rows, cols);
  t->requires_grad = requires_grad;
  tracked_.push_back(t);
  return t;
}

void Tape::adopt(const TensorPtr& t) {
  t->tape_id = id_;
  t->node = -1;
  tracked_.push_back(t);
}

TensorPtr Tape::record(ops::Op op, std::vector<TensorPtr> inputs, TensorPtr out,
                       std::vector<double> buf, std::vector<int> ibuf,
                       double scalar) {
  for (const auto& in : inputs)
    if (in->requires_grad) out->requires_grad = true;
  out->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(inputs), out, std::move(buf),
                        std::move(ibuf), scalar});
  return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->cols != b->rows)
    fail_runtime("matmul: incompatible shapes " + a->shape_str() + " x " +
                 b->shape_str());
  auto out = make(a->rows, b->cols);
  matmul_accum(a->values.data(), b->values.data(), out->values.data(), a->rows,
               a->cols, b->cols);
  return record(ops::Op::kMatmul, {a, b}, out);
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  const bool same = a->rows == b->rows && a->cols == b->cols;
  const bool bias_row = b->rows == 1 && a->cols == b->cols;
  if (!same && !bias_row)
    fail_runtime("add: incompatible shapes " + a->shape_str() + " + " +
                 b->shape_str());
  auto out = make(a->rows, a->cols);
  if (same) {
    for (int i = 0; i < out->size(); ++i)
      out->values[i] = a->values[i] + b->values[i];
  } else {
    for (int r = 0; r < a->rows; ++r)
      for (int c = 0; c < a->cols; ++c)
        out->at(r, c) = a->at(r, c) + b->values[c];
  }
  return record(ops::Op::kAdd, {a, b}, out);
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rows != b->rows || a->cols != b->cols)
    fail_runtime("mul: incompatible shapes " + a->shape_str() + " * " +
                 b->shape_str());
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] * b->values[i];
  return record(ops::Op::kMul, {a, b}, out);
}

TensorPtr Tape::sigmoid(const TensorPtr& a) {
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i)
    out->values[i] = 1.0 / (1.0 + std::exp(-a->values[i]));
  return record(ops::Op::kSigmoid, {a}, out);
}

TensorPtr Tape::tanh(const TensorPtr& a) {
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i) out->values[i] = std::tanh(a->values[i]);
  return record(ops::Op::kTanh, {a}, out);
}

TensorPtr Tape::relu(const TensorPtr& a) {
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
  return record(ops::Op::kRelu, {a}, out);
}

TensorPtr Tape::concat(const TensorPtr& a, const TensorPtr& b) {
  if (a->rows != b->rows)
    fail_runtime("concat: row mismatch " + a->shape_str() + " ++ " +
                 b->shape_str());
  auto out = make(a->rows, a->cols + b->cols);
  for (int r = 0; r < a->rows; ++r) {
    std::memcpy(&out->at(r, 0), &a->at(r, 0), sizeof(double) * a->cols);
    std::memcpy(&out->at(r, a->cols), &b->at(r, 0), sizeof(double) * b->cols);
  }
  return record(ops::Op::kConcat, {a, b}, out);
}

TensorPtr Tape::sum(const TensorPtr& a) {
  auto out = make(1, 1);
  double s = 0.0;
  for (double v : a->values) s += v;
  out->values[0] = s;
  return record(ops::Op::kSum, {a}, out);
}

TensorPtr Tape::log_softmax(const TensorPtr& a) {
  auto out = make(a->rows, a->cols);
  for (int r = 0; r < a->rows; ++r) {
    double mx = a->at(r, 0);
    for (int c = 1; c < a->cols; ++c) mx = std::max(mx, a->at(r, c));
    double z = 0.0;
    for (int c = 0; c < a->cols; ++c) z += std::exp(a->at(r, c) - mx);
    const double lz = std::log(z);
    for (int c = 0; c < a->cols; ++c) out->at(r, c) = a->at(r, c) - mx - lz;
  }
  return record(ops::Op::kLogSoftmax, {a}, out);
}

TensorPtr Tape::dropout(const TensorPtr& a, double rate, std::mt19937_64& rng,
                        bool train_mode) {
  if (rate < 0.0 || rate >= 1.0)
    fail_runtime("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!train_mode || rate == 0.0) return a;
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(a->values.size());
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : 1.0 / keep;
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i)
    out->values[i] = a->values[i] * mask[i];
  return record(ops::Op::kDropout, {a}, out, std::move(mask));
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
  auto out = make(a->rows, a->cols);
  for (int i = 0; i < out->size(); ++i) out->values[i] = c * a->values[i];
  return record(ops::Op::kScale, {a}, out, {}, {}, c);
}

TensorPtr Tape::slice_cols(const TensorPtr& a, int col_begin, int col_end) {
  if (col_begin < 0 || col_end > a->cols || col_begin >= col_end)
    fail_runtime("slice_cols: bad range [" + std::to_string(col_begin) + "," +
                 std::to_string(col_end) + ") for " + a->shape_str());
  auto out = make(a->rows, col_end - col_begin);
  for (int r = 0; r < a->rows; ++r)
    std::memcpy(&out->at(r, 0), &a->at(r, col_begin),
                sizeof(double) * out->cols);
  return record(ops::Op::kSliceCols, {a}, out, {}, {col_begin, col_end});
}

TensorPtr Tape::gather_rows(const TensorPtr& matrix,
                            const std::vector<int>& ids) {
  for (int id : ids)
    if (id < 0 || id >= matrix->rows)
      fail_runtime("gather_rows: id " + std::to_string(id) +
                   " out of range [0," + std::to_string(matrix->rows) + ")");
  auto out = make(static_cast<int>(ids.size()), matrix->cols);
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(&out->at(static_cast<int>(i), 0), &matrix->at(ids[i], 0),
                sizeof(double) * matrix->cols);
  return record(ops::Op::kGatherRows, {matrix}, out, {}, ids);
}

TensorPtr Tape::basis_combine(const TensorPtr& alpha, std::vector<double> basis,
                              int dim) {
  const int b_count = alpha->rows;
  const int k = alpha->cols;
  if (static_cast<int>(basis.size()) != b_count * k * dim)
    fail_runtime("basis_combine: basis blob size " +
                 std::to_string(basis.size()) + " != B*K*dim");
  auto out = make(b_count, dim);
  for (int b = 0; b < b_count; ++b) {
    double* orow = &out->at(b, 0);
    for (int kk = 0; kk < k; ++kk) {
      const double w = alpha->at(b, kk);
      if (w == 0.0) continue;
      const double* base = basis.data() + (static_cast<size_t>(b) * k + kk) * dim;
      for (int d = 0; d < dim; ++d) orow[d] += w * base[d];
    }
  }
  return record(ops::Op::kBasisCombine, {alpha}, out, std::move(basis), {},
                static_cast<double>(dim));
}

TensorPtr Tape::nll_select(const TensorPtr& logp, const std::vector<int>& labels,
                           const std::vector<double>& mask) {
  if (static_cast<int>(labels.size()) != logp->rows ||
      mask.size() != labels.size())
    fail_runtime("nll_select: label/mask count does not match rows of " +
                 logp->shape_str());
  for (size_t b = 0; b < labels.size(); ++b)
    if (mask[b] != 0.0 && (labels[b] < 0 || labels[b] >= logp->cols))
      fail_runtime("nll_select: class id " + std::to_string(labels[b]) +
                   " out of range [0," + std::to_string(logp->cols) + ")");
  auto out = make(1, 1);
  double s = 0.0;
  for (size_t b = 0; b < labels.size(); ++b)
    if (mask[b] != 0.0)
      s -= mask[b] * logp->at(static_cast<int>(b), labels[b]);
  out->values[0] = s;
  return record(ops::Op::kNllSelect, {logp}, out, mask, labels);
}

TensorPtr Tape::kl_const(const std::vector<double>& p,
                         const std::vector<double>& logp_const,
                         const TensorPtr& logq,
                         const std::vector<double>& mask) {
  if (static_cast<int>(p.size()) != logq->size() ||
      logp_const.size() != p.size() ||
      static_cast<int>(mask.size()) != logq->rows)
    fail_runtime("kl_const: clean distribution does not match " +
                 logq->shape_str());
  auto out = make(1, 1);
  double s = 0.0;
  for (int b = 0; b < logq->rows; ++b) {
    if (mask[b] == 0.0) continue;
    double row = 0.0;
    for (int c = 0; c < logq->cols; ++c) {
      const size_t i = static_cast<size_t>(b) * logq->cols + c;
      if (p[i] != 0.0) row += p[i] * (logp_const[i] - logq->values[i]);
    }
    s += mask[b] * row;
  }
  out->values[0] = s;
  // buf packs p then logp_const; only p is needed for backward.
  std::vector<double> buf = p;
  buf.insert(buf.end(), mask.begin(), mask.end());
  return record(ops::Op::kKlConst, {logq}, out, std::move(buf));
}

void Tape::ensure_grad(const TensorPtr& t) {
  if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    fail_runtime("backward: loss must be scalar, got " + loss->shape_str());
  if (loss->tape_id != id_ || loss->node < 0)
    fail_runtime("backward: loss was not produced on this tape");
  ensure_grad(loss);
  loss->grad[0] += 1.0;
  for (int i = loss->node; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (n.out->grad.empty()) continue;
    node_backward(n);
  }
  backward_done_ = true;
}

void Tape::node_backward(const Node& n) {
  const std::vector<double>& go = n.out->grad;
  switch (n.op) {
    case ops::Op::kMatmul: {
      const auto& a = n.inputs[0];
      const auto& b = n.inputs[1];
      if (a->requires_grad) {
        ensure_grad(a);
        matmul_bt_accum(go.data(), b->values.data(), a->grad.data(), a->rows,
                        b->cols, a->cols);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        matmul_at_accum(a->values.data(), go.data(), b->grad.data(), a->rows,
                        a->cols, b->cols);
      }
      break;
    }
    case ops::Op::kAdd: {
      const auto& a = n.inputs[0];
      const auto& b = n.inputs[1];
      if (a->requires_grad) {
        ensure_grad(a);
        for (size_t i = 0; i < go.size(); ++i) a->grad[i] += go[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        if (b->rows == n.out->rows) {
          for (size_t i = 0; i < go.size(); ++i) b->grad[i] += go[i];
        } else {  // bias row: sum over rows
          for (int r = 0; r < n.out->rows; ++r)
            for (int c = 0; c < n.out->cols; ++c)
              b->grad[c] += go[static_cast<size_t>(r) * n.out->cols + c];
        }
      }
      break;
    }
    case ops::Op::kMul: {
      const auto& a = n.inputs[0];
      const auto& b = n.inputs[1];
      if (a->requires_grad) {
        ensure_grad(a);
        for (size_t i = 0; i < go.size(); ++i)
          a->grad[i] += go[i] * b->values[i];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (size_t i = 0; i < go.size(); ++i)
          b->grad[i] += go[i] * a->values[i];
      }
      break;
    }
    case ops::Op::kSigmoid: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) {
        const double y = n.out->values[i];
        a->grad[i] += go[i] * y * (1.0 - y);
      }
      break;
    }
    case ops::Op::kTanh: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) {
        const double y = n.out->values[i];
        a->grad[i] += go[i] * (1.0 - y * y);
      }
      break;
    }
    case ops::Op::kRelu: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i)
        if (a->values[i] > 0.0) a->grad[i] += go[i];
      break;
    }
    case ops::Op::kConcat: {
      const auto& a = n.inputs[0];
      const auto& b = n.inputs[1];
      if (a->requires_grad) {
        ensure_grad(a);
        for (int r = 0; r < a->rows; ++r)
          for (int c = 0; c < a->cols; ++c)
            a->grad[static_cast<size_t>(r) * a->cols + c] +=
                go[static_cast<size_t>(r) * n.out->cols + c];
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int r = 0; r < b->rows; ++r)
          for (int c = 0; c < b->cols; ++c)
            b->grad[static_cast<size_t>(r) * b->cols + c] +=
                go[static_cast<size_t>(r) * n.out->cols + a->cols + c];
      }
      break;
    }
    case ops::Op::kSum: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (auto& g : a->grad) g += go[0];
      break;
    }
    case ops::Op::kLogSoftmax: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (int r = 0; r < a->rows; ++r) {
        double gsum = 0.0;
        for (int c = 0; c < a->cols; ++c)
          gsum += go[static_cast<size_t>(r) * a->cols + c];
        for (int c = 0; c < a->cols; ++c) {
          const size_t i = static_cast<size_t>(r) * a->cols + c;
          a->grad[i] += go[i] - std::exp(n.out->values[i]) * gsum;
        }
      }
      break;
    }
    case ops::Op::kDropout: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) a->grad[i] += go[i] * n.buf[i];
      break;
    }
    case ops::Op::kScale: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      for (size_t i = 0; i < go.size(); ++i) a->grad[i] += go[i] * n.scalar;
      break;
    }
    case ops::Op::kSliceCols: {
      const auto& a = n.inputs[0];
      if (!a->requires_grad) break;
      ensure_grad(a);
      const int c0 = n.ibuf[0];
      for (int r = 0; r < n.out->rows; ++r)
        for (int c = 0; c < n.out->cols; ++c)
          a->grad[static_cast<size_t>(r) * a->cols + c0 + c] +=
              go[static_cast<size_t>(r) * n.out->cols + c];
      break;
    }
    case ops::Op::kGatherRows: {
      const auto& m = n.inputs[0];
      if (!m->requires_grad) break;
      ensure_grad(m);
      for (size_t i = 0; i < n.ibuf.size(); ++i) {
        const size_t src = i * m->cols;
        const size_t dst = static_cast<size_t>(n.ibuf[i]) * m->cols;
        for (int c = 0; c < m->cols; ++c) m->grad[dst + c] += go[src + c];
      }
      break;
    }
    case ops::Op::kBasisCombine: {
      const auto& alpha = n.inputs[0];
      if (!alpha->requires_grad) break;
      ensure_grad(alpha);
      const int dim = static_cast<int>(n.scalar);
      const int k = alpha->cols;
      for (int b = 0; b < alpha->rows; ++b) {
        const double* grow = go.data() + static_cast<size_t>(b) * dim;
        for (int kk = 0; kk < k; ++kk) {
          const double* base =
              n.buf.data() + (static_cast<size_t>(b) * k + kk) * dim;
          double acc = 0.0;
          for (int d = 0; d < dim; ++d) acc += grow[d] * base[d];
          alpha->grad[static_cast<size_t>(b) * k + kk] += acc;
        }
      }
      break;
    }
    case ops::Op::kNllSelect: {
      const auto& logp = n.inputs[0];
      if (!logp->requires_grad) break;
      ensure_grad(logp);
      for (size_t b = 0; b < n.ibuf.size(); ++b)
        if (n.buf[b] != 0.0)
          logp->grad[b * logp->cols + n.ibuf[b]] -= n.buf[b] * go[0];
      break;
    }
    case ops::Op::kKlConst: {
      const auto& logq = n.inputs[0];
      if (!logq->requires_grad) break;
      ensure_grad(logq);
      const double* p = n.buf.data();
      const double* mask = n.buf.data() + logq->size();
      for (int b = 0; b < logq->rows; ++b) {
        if (mask[b] == 0.0) continue;
        for (int c = 0; c < logq->cols; ++c) {
          const size_t i = static_cast<size_t>(b) * logq->cols + c;
          logq->grad[i] -= mask[b] * p[i] * go[0];
        }
      }
      break;
    }
  }
}

void Tape::zero_grads() {
  for (const auto& n : nodes_) {
    n.out->grad.clear();
    for (const auto& in : n.inputs) in->grad.clear();
  }
  for (const auto& t : tracked_) t->grad.clear();
  backward_done_ = false;
}

std::vector<std::vector<double>> Tape::input_gradients(
    const std::vector<TensorPtr>& leaves) const {
  if (!backward_done_)
    fail_runtime("input_gradients: backward has not run on this tape");
  std::vector<std::vector<double>> out;
  out.reserve(leaves.size());
  for (const auto& l : leaves) out.push_back(l->grad_or_zero());
  return out;
}

}  // namespace iadvtext
