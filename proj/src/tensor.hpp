#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"

namespace iadvtext {

class Tape;

/// Dense row-major matrix of 64-bit floats. Vectors are stored as a single
/// row ([1, n]) and scalars as [1, 1]. Gradients live next to the values and
/// are filled in by Tape::backward; an empty grad vector means "not yet
/// touched by a backward pass".
class Tensor {
 public:
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  int node = -1;           // index of the producing tape node, -1 for leaves
  std::uint64_t tape_id = 0;

  int size() const { return rows * cols; }
  std::vector<int> shape() const { return {rows, cols}; }
  std::string shape_str() const;
  bool is_scalar() const { return rows == 1 && cols == 1; }
  double scalar() const;

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }

  /// Gradient with zeros substituted when backward never reached this tensor.
  std::vector<double> grad_or_zero() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

namespace ops {
enum class Op {
  kMatmul,
  kAdd,
  kMul,
  kSigmoid,
  kTanh,
  kRelu,
  kConcat,
  kSum,
  kLogSoftmax,
  kDropout,
  kScale,
  kSliceCols,
  kGatherRows,
  kBasisCombine,
  kNllSelect,
  kKlConst,
};
}  // namespace ops

/// Reverse-mode tape. Records one node per primitive operation in execution
/// order; backward() walks the list once in reverse. A tape and its tensors
/// are confined to one thread; distinct tapes over shared read-only
/// parameters may run concurrently.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- Tensor creation ------------------------------------------------------
  TensorPtr leaf(int rows, int cols, std::vector<double> values,
                 bool requires_grad = true);
  TensorPtr constant(int rows, int cols, std::vector<double> values);
  TensorPtr zeros(int rows, int cols, bool requires_grad = false);
  /// Registers an externally created tensor (model parameter) on this tape so
  /// backward may write into its grad.
  void adopt(const TensorPtr& t);

  // -- Primitive operations -------------------------------------------------
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  /// Elementwise add; also accepts a [1, n] bias row against an [m, n] left
  /// operand. Any other shape pair is an error.
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  /// Concatenates along columns: [m, p] ++ [m, q] -> [m, p+q].
  TensorPtr concat(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sum(const TensorPtr& a);
  /// Row-wise log softmax, stabilized by subtracting the row max.
  TensorPtr log_softmax(const TensorPtr& a);
  /// Inverted dropout: zeroes each element with probability `rate` and scales
  /// survivors by 1/(1-rate). Identity (no node recorded) when !train_mode.
  TensorPtr dropout(const TensorPtr& a, double rate, std::mt19937_64& rng,
                    bool train_mode = true);

  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr slice_cols(const TensorPtr& a, int col_begin, int col_end);
  /// out[i, :] = matrix[ids[i], :]. Backward scatter-adds into the matrix.
  TensorPtr gather_rows(const TensorPtr& matrix, const std::vector<int>& ids);
  /// Per-row linear combination of fixed basis vectors:
  /// out[b, :] = sum_k alpha[b, k] * basis[b, k, :], basis a constant
  /// [B*K*dim] blob. Backward fills d/d alpha only.
  TensorPtr basis_combine(const TensorPtr& alpha, std::vector<double> basis,
                          int dim);
  /// sum_b mask[b] * (-logp[b, labels[b]]).
  TensorPtr nll_select(const TensorPtr& logp, const std::vector<int>& labels,
                       const std::vector<double>& mask);
  /// sum_b mask[b] * sum_c p[b,c]*(logp_const[b,c] - logq[b,c]); the clean
  /// distribution (p, logp_const) is a constant, so gradients flow only
  /// through logq.
  TensorPtr kl_const(const std::vector<double>& p,
                     const std::vector<double>& logp_const,
                     const TensorPtr& logq, const std::vector<double>& mask);

  // -- Differentiation ------------------------------------------------------
  /// Populates grad = d loss / d tensor for every requires_grad tensor
  /// reachable from `loss`. Gradients accumulate additively across fan-out
  /// and across repeated backward calls; use zero_grads() in between.
  void backward(const TensorPtr& loss);
  void zero_grads();
  bool backward_done() const { return backward_done_; }

  /// d loss / d leaf for each leaf, as raw arrays. Leaves unused by the loss
  /// yield zero arrays. Errors if backward has not run on this tape.
  std::vector<std::vector<double>> input_gradients(
      const std::vector<TensorPtr>& leaves) const;

  std::uint64_t id() const { return id_; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    ops::Op op;
    std::vector<TensorPtr> inputs;
    TensorPtr out;
    std::vector<double> buf;  // dropout mask, basis blob, p / logp for KL
    std::vector<int> ibuf;    // gather ids, labels, slice bounds
    double scalar = 0.0;      // scale factor, basis dim
  };

  TensorPtr make(int rows, int cols);
  TensorPtr record(ops::Op op, std::vector<TensorPtr> inputs, TensorPtr out,
                   std::vector<double> buf = {}, std::vector<int> ibuf = {},
                   double scalar = 0.0);
  void node_backward(const Node& n);

  static void ensure_grad(const TensorPtr& t);

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<TensorPtr> tracked_;  // leaves/constants/adopted params
  bool backward_done_ = false;
};

/// Central finite differences are the test-side oracle for every gradient in
/// this library; see tests. These helpers are the shared numeric plumbing.
double l2_norm(const std::vector<double>& v);
bool all_finite(const std::vector<double>& v);
void check_finite(const Tensor& t, const char* what);

}  // namespace iadvtext
