// SPDX-License-Identifier: Apache-2.0
#include "clsbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "clsbench/errors.hpp"

namespace clsbench::nn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_node(Shape shape, std::initializer_list<NodePtr<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->value.assign(shape_size(shape), T(0));
  n->shape = std::move(shape);
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
    n->parents.push_back(p);
  }
  return n;
}

template <typename T>
void check_finite(std::span<const T> v, const char* op) {
  for (T x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + op);
  }
}

void require_2d(const Shape& s, const char* op) {
  if (s.size() != 2) throw ContractError(std::string(op) + ": expected a 2-D tensor");
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  auto n = std::make_shared<Node<T>>();
  n->value.assign(shape_size(shape), T(0));
  n->shape = std::move(shape);
  return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_size(shape) != values.size()) throw ContractError("tensor: shape does not match value count");
  for (auto d : shape) {
    if (d == 0) throw ContractError("tensor: zero-sized dimension");
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  auto t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractError("item: tensor is not a scalar");
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto n = std::make_shared<Node<T>>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = node_->requires_grad;
  return Tensor(n);
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) throw ContractError("backward: root must be a scalar");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---- kernels ----------------------------------------------------------------

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---- ops --------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return linear(a, b, Tensor<T>());
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_2d(x.shape(), "linear");
  require_2d(w.shape(), "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) throw ContractError("matmul: inner dimensions differ");
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != n) throw ContractError("linear: bias length mismatch");

  auto out = has_bias ? make_node<T>({m, n}, {x.node(), w.node(), bias.node()})
                      : make_node<T>({m, n}, {x.node(), w.node()});
  T* c = out->value.data();
  if (has_bias) {
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), c + i * n);
  }
  gemm_nn(x.values().data(), w.values().data(), c, m, k, n, has_bias);

  if (out->requires_grad) {
    out->backward_fn = [m, k, n, has_bias](Node<T>& self) {
      auto& xn = *self.parents[0];
      auto& wn = *self.parents[1];
      const T* g = self.grad.data();
      if (xn.requires_grad) gemm_nt(g, wn.value.data(), xn.ensure_grad().data(), m, n, k, true);
      if (wn.requires_grad) gemm_tn(xn.value.data(), g, wn.ensure_grad().data(), m, k, n, true);
      if (has_bias && self.parents[2]->requires_grad) {
        auto& bg = self.parents[2]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) bg[j] += g[i * n + j];
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ContractError("add: shape mismatch");
  auto out = make_node<T>(a.shape(), {a.node(), b.node()});
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
  if (out->requires_grad) {
    out->backward_fn = [](Node<T>& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ContractError("mul: shape mismatch");
  auto out = make_node<T>(a.shape(), {a.node(), b.node()});
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
  if (out->requires_grad) {
    out->backward_fn = [](Node<T>& self) {
      auto& an = *self.parents[0];
      auto& bn = *self.parents[1];
      if (an.requires_grad) {
        auto& g = an.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
      }
      if (bn.requires_grad) {
        auto& g = bn.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = make_node<T>({1}, {a.node()});
  T s = 0;
  for (T v : a.values()) s += v;
  out->value[0] = s;
  if (out->requires_grad) {
    out->backward_fn = [](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (auto& v : g) v += self.grad[0];
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto out = make_node<T>(x.shape(), {x.node()});
  auto xv = x.values();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out->value[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  }
  if (out->requires_grad) {
    out->backward_fn = [inv_sqrt2](Node<T>& self) {
      auto& xn = *self.parents[0];
      auto& g = xn.ensure_grad();
      const T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = xn.value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  require_2d(x.shape(), "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gain.size() != n || bias.size() != n) throw ContractError("layer_norm: parameter length mismatch");
  constexpr T eps = T(1e-5);
  auto out = make_node<T>(x.shape(), {x.node(), gain.node(), bias.node()});
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto rstd = std::make_shared<std::vector<T>>(m);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(n);
    const T r = T(1) / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * r;
      (*xhat)[i * n + j] = h;
      out->value[i * n + j] = h * gv[j] + bv[j];
    }
  }
  if (out->requires_grad) {
    out->backward_fn = [m, n, xhat, rstd](Node<T>& self) {
      auto& xn = *self.parents[0];
      auto& gn = *self.parents[1];
      auto& bn = *self.parents[2];
      const T* g = self.grad.data();
      if (gn.requires_grad || bn.requires_grad) {
        auto& gg = gn.ensure_grad();
        auto& bg = bn.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            gg[j] += g[i * n + j] * (*xhat)[i * n + j];
            bg[j] += g[i * n + j];
          }
        }
      }
      if (xn.requires_grad) {
        auto& xg = xn.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          T mean_dy = 0, mean_dy_xhat = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T dy = g[i * n + j] * gn.value[j];
            mean_dy += dy;
            mean_dy_xhat += dy * (*xhat)[i * n + j];
          }
          mean_dy /= T(n);
          mean_dy_xhat /= T(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T dy = g[i * n + j] * gn.value[j];
            xg[i * n + j] += (*rstd)[i] * (dy - mean_dy - (*xhat)[i * n + j] * mean_dy_xhat);
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_2d(x.shape(), "softmax");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto out = make_node<T>(x.shape(), {x.node()});
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T* o = out->value.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  if (out->requires_grad) {
    out->backward_fn = [m, n](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const T* p = self.value.data() + i * n;
        const T* dy = self.grad.data() + i * n;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += p[j] * dy[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += p[j] * (dy[j] - dot);
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_2d(table.shape(), "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ContractError("embedding: empty id list");
  auto out = make_node<T>({ids.size(), d}, {table.node()});
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) throw ContractError("embedding: id out of range");
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out->value.data() + i * d);
  }
  if (out->requires_grad) {
    std::vector<std::int32_t> idcopy(ids.begin(), ids.end());
    out->backward_fn = [d, idcopy = std::move(idcopy)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < idcopy.size(); ++i) {
        T* dst = g.data() + static_cast<std::size_t>(idcopy[i]) * d;
        const T* src = self.grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_2d(x.shape(), "gather_rows");
  const std::size_t m = x.dim(0), d = x.dim(1);
  if (rows.empty()) throw ContractError("gather_rows: empty row list");
  auto out = make_node<T>({rows.size(), d}, {x.node()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw ContractError("gather_rows: row out of range");
    std::copy_n(x.values().data() + rows[i] * d, d, out->value.data() + i * d);
  }
  if (out->requires_grad) {
    std::vector<std::size_t> rc(rows.begin(), rows.end());
    out->backward_fn = [d, rc = std::move(rc)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < rc.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) g[rc[i] * d + j] += self.grad[i * d + j];
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& qkv, const AttentionLayout& layout) {
  require_2d(qkv.shape(), "attention");
  const std::size_t bsz = layout.batch, tlen = layout.time, heads = layout.heads;
  if (bsz * tlen != qkv.dim(0)) throw ContractError("attention: rows != batch * time");
  if (qkv.dim(1) % 3 != 0) throw ContractError("attention: width must be 3 * d_model");
  const std::size_t d = qkv.dim(1) / 3;
  if (heads == 0 || d % heads != 0) throw ContractError("attention: d_model not divisible by heads");
  if (!layout.lengths.empty() && layout.lengths.size() != bsz) throw ContractError("attention: lengths size");
  const std::size_t hd = d / heads;
  const T scale = T(1) / std::sqrt(T(hd));
  const bool causal = layout.causal;
  std::vector<std::size_t> lens = layout.lengths;
  if (lens.empty()) lens.assign(bsz, tlen);
  for (auto l : lens) {
    if (l == 0 || l > tlen) throw ContractError("attention: sequence length out of range");
  }

  auto out = make_node<T>({bsz * tlen, d}, {qkv.node()});
  // probs[b][h][i][j], only j in the visible range is meaningful.
  auto probs = std::make_shared<std::vector<T>>(bsz * heads * tlen * tlen, T(0));
  const T* x = qkv.values().data();
  const std::size_t stride = 3 * d;

  auto visible = [causal, tlen](std::size_t i, std::size_t len) {
    // Number of keys query i may attend to.
    std::size_t end = causal ? i + 1 : len;
    return std::min(end, tlen);
  };

  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* pb = probs->data() + (b * heads + h) * tlen * tlen;
      for (std::size_t i = 0; i < tlen; ++i) {
        const T* q = x + (b * tlen + i) * stride + h * hd;
        const std::size_t nv = visible(i, lens[b]);
        T* p = pb + i * tlen;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < nv; ++j) {
          const T* kk = x + (b * tlen + j) * stride + d + h * hd;
          T s = 0;
          for (std::size_t e = 0; e < hd; ++e) s += q[e] * kk[e];
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j < nv; ++j) z += (p[j] = std::exp(p[j] - mx));
        for (std::size_t j = 0; j < nv; ++j) p[j] /= z;
        T* o = out->value.data() + (b * tlen + i) * d + h * hd;
        for (std::size_t j = 0; j < nv; ++j) {
          const T* vv = x + (b * tlen + j) * stride + 2 * d + h * hd;
          const T pj = p[j];
          for (std::size_t e = 0; e < hd; ++e) o[e] += pj * vv[e];
        }
      }
    }
  }

  if (out->requires_grad) {
    out->backward_fn = [=](Node<T>& self) {
      auto& in = *self.parents[0];
      const T* xv = in.value.data();
      T* gx = in.ensure_grad().data();
      std::vector<T> dp(tlen);
      for (std::size_t b = 0; b < bsz; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const T* pb = probs->data() + (b * heads + h) * tlen * tlen;
          for (std::size_t i = 0; i < tlen; ++i) {
            const std::size_t nv = visible(i, lens[b]);
            const T* p = pb + i * tlen;
            const T* go = self.grad.data() + (b * tlen + i) * d + h * hd;
            T dot = 0;
            for (std::size_t j = 0; j < nv; ++j) {
              const T* vv = xv + (b * tlen + j) * stride + 2 * d + h * hd;
              T* gv = gx + (b * tlen + j) * stride + 2 * d + h * hd;
              T s = 0;
              for (std::size_t e = 0; e < hd; ++e) {
                s += go[e] * vv[e];
                gv[e] += p[j] * go[e];
              }
              dp[j] = s;
              dot += s * p[j];
            }
            const T* q = xv + (b * tlen + i) * stride + h * hd;
            T* gq = gx + (b * tlen + i) * stride + h * hd;
            for (std::size_t j = 0; j < nv; ++j) {
              const T ds = p[j] * (dp[j] - dot) * scale;
              if (ds == T(0)) continue;
              const T* kk = xv + (b * tlen + j) * stride + d + h * hd;
              T* gk = gx + (b * tlen + j) * stride + d + h * hd;
              for (std::size_t e = 0; e < hd; ++e) {
                gq[e] += ds * kk[e];
                gk[e] += ds * q[e];
              }
            }
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <typename T>
double cross_entropy_value(std::span<const T> logits, std::size_t rows, std::size_t cols,
                           std::span<const std::int32_t> targets) {
  if (targets.size() != rows) throw ContractError("cross_entropy: one target per row required");
  if (rows == 0) throw ContractError("cross_entropy: empty batch");
  check_finite(logits, "cross_entropy logits");
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::int32_t t = targets[i];
    if (t == kIgnoreTarget) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= cols) throw ContractError("cross_entropy: target out of range");
    const T* row = logits.data() + i * cols;
    const T mx = *std::max_element(row, row + cols);
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    total += std::log(z) - static_cast<double>(row[t] - mx);
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every target ignored");
  return total / static_cast<double>(count);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  require_2d(logits.shape(), "cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (targets.size() != m) throw ContractError("cross_entropy: one target per row required");
  if (m == 0) throw ContractError("cross_entropy: empty batch");
  check_finite(logits.values(), "cross_entropy logits");
  auto out = make_node<T>({1}, {logits.node()});
  auto probs = std::make_shared<std::vector<T>>(m * c);
  auto lv = logits.values();
  T total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::int32_t t = targets[i];
    if (t == kIgnoreTarget) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= c) throw ContractError("cross_entropy: target out of range");
    const T* row = lv.data() + i * c;
    T* p = probs->data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (p[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) p[j] /= z;
    total += std::log(z) - (row[t] - mx);
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every target ignored");
  out->value[0] = total / T(count);
  if (!std::isfinite(out->value[0])) throw NumericError("cross_entropy: non-finite loss");
  if (out->requires_grad) {
    std::vector<std::int32_t> tc(targets.begin(), targets.end());
    out->backward_fn = [m, c, count, probs, tc = std::move(tc)](Node<T>& self) {
      auto& g = self.parents[0]->ensure_grad();
      const T s = self.grad[0] / T(count);
      for (std::size_t i = 0; i < m; ++i) {
        if (tc[i] == kIgnoreTarget) continue;
        const T* p = probs->data() + i * c;
        T* gr = g.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) gr[j] += s * p[j];
        gr[tc[i]] -= s;
      }
    };
  }
  return Tensor<T>(out);
}

#define CLSBENCH_INSTANTIATE(T)                                                                              \
  template class Tensor<T>;                                                                                  \
  template void gemm_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);            \
  template void gemm_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);            \
  template void gemm_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, bool);            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> gelu(const Tensor<T>&);                                                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> softmax(const Tensor<T>&);                                                              \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);                             \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                            \
  template Tensor<T> attention(const Tensor<T>&, const AttentionLayout&);                                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>);                         \
  template double cross_entropy_value<T>(std::span<const T>, std::size_t, std::size_t,                      \
                                         std::span<const std::int32_t>);

CLSBENCH_INSTANTIATE(float)
CLSBENCH_INSTANTIATE(double)

}  // namespace clsbench::nn
