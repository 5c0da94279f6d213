// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every op allocates a fresh node that remembers its parents and a closure
// which scatters the node's gradient into them. Calling backward() on a scalar
// walks the graph in reverse topological order. Activations are 2-D
// [rows, cols] matrices; sequence batches are flattened to rows = batch * time.
//
// Kernels accumulate each output element in a fixed order that depends only on
// the reduction length, never on the number of rows, so a row's result is
// bit-identical whatever batch it is computed in.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace clsbench::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor from(Shape shape, std::vector<T> values);
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return node_->value; }
  /// Direct write access; only for leaves (parameters, optimizer updates).
  std::span<T> mutable_values() { return node_->value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  T item() const;

  /// Deep copy as a new leaf with the same requires_grad flag.
  Tensor clone() const;

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1; self must be scalar.
  void backward() const;

  std::shared_ptr<Node<T>> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

// ---- raw kernels (row-major) -------------------------------------------------

/// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// C[K,N] (+)= A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// ---- differentiable ops ------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[M,K] * w[K,N] + bias[N]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Row-wise layer norm with eps 1e-5.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);

/// Row-wise softmax (max-subtracted).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// Gathers table rows: out[i] = table[ids[i]].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

/// Selects rows of x.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

struct AttentionLayout {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t heads = 0;
  bool causal = true;
  /// Valid key count per sequence; empty means every position is valid.
  std::vector<std::size_t> lengths;
};

/// Multi-head scaled dot-product attention over fused qkv [batch*time, 3*d].
template <typename T>
Tensor<T> attention(const Tensor<T>& qkv, const AttentionLayout& layout);

inline constexpr std::int32_t kIgnoreTarget = -1;

/// Mean over non-ignored rows of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets);

/// Non-differentiable cross-entropy on raw values; same checks as the op.
template <typename T>
double cross_entropy_value(std::span<const T> logits, std::size_t rows, std::size_t cols,
                           std::span<const std::int32_t> targets);

}  // namespace clsbench::nn
