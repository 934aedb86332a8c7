#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sparscene/error.hpp"

namespace sparscene {

// ---------------------------------------------------------------------------
// Allocation accounting (drives the bench harness memory estimate)
// ---------------------------------------------------------------------------

struct MemoryStats {
    std::size_t live_bytes = 0;
    std::size_t peak_bytes = 0;
};

inline MemoryStats& memory_stats() {
    thread_local MemoryStats stats;
    return stats;
}

inline void reset_peak_memory() { memory_stats().peak_bytes = memory_stats().live_bytes; }

namespace detail {

inline void account_alloc(std::size_t bytes) {
    auto& s = memory_stats();
    s.live_bytes += bytes;
    s.peak_bytes = std::max(s.peak_bytes, s.live_bytes);
}

inline void account_free(std::size_t bytes) { memory_stats().live_bytes -= bytes; }

}  // namespace detail

// When false, newly created tensors do not track parents or backward
// closures; forward values are unchanged. Used for inference and benching.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << "]";
    return os.str();
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data once touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    TensorNode(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        account_alloc(data.size() * sizeof(double));
    }
    ~TensorNode() { account_free((data.size() + grad.size()) * sizeof(double)); }
    TensorNode(const TensorNode&) = delete;
    TensorNode& operator=(const TensorNode&) = delete;

    void ensure_grad() {
        if (grad.empty()) {
            grad.assign(data.size(), 0.0);
            account_alloc(grad.size() * sizeof(double));
        }
    }
};

}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)), 0.0);
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor full(Shape shape, double value) {
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)), value);
        return Tensor(std::move(shape), std::move(data), false);
    }

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    std::vector<double>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    double value() const {
        if (numel() != 1) throw ContractError("value(): tensor is not scalar");
        return node_->data[0];
    }

    // Reverse-mode sweep from a scalar output. Gradient buffers of reachable
    // tracked tensors are accumulated into (call zero_grad on leaves between
    // optimizer steps).
    void backward() const {
        if (numel() != 1) throw ContractError("backward(): output must be scalar");
        if (!node_->requires_grad)
            throw ContractError("backward(): output does not require grad");
        // Iterative post-order DFS; creation order is irrelevant because the
        // traversal is fixed by the parent lists.
        std::vector<detail::TensorNode*> order;
        std::unordered_set<detail::TensorNode*> seen;
        struct Frame {
            detail::TensorNode* node;
            size_t next_parent;
        };
        std::vector<Frame> stack;
        stack.push_back({node_.get(), 0});
        seen.insert(node_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                detail::TensorNode* p = f.node->parents[f.next_parent++].get();
                if (p->requires_grad && seen.insert(p).second) {
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
        }
    }

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  private:
    Tensor(Shape shape, std::vector<double> data, bool requires_grad)
        : node_(std::make_shared<detail::TensorNode>(std::move(shape), std::move(data))) {
        node_->requires_grad = requires_grad && grad_mode();
    }

    friend Tensor make_op_result(Shape shape, std::vector<double> data,
                                 std::vector<Tensor> parents,
                                 std::function<void(detail::TensorNode&)> backward_fn);

    std::shared_ptr<detail::TensorNode> node_;
};

// Builds the result tensor of a primitive and wires the tape when any parent
// is tracked and grad mode is on.
inline Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                             std::function<void(detail::TensorNode&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data), false);
    if (!grad_mode()) return out;
    bool track = false;
    for (const Tensor& p : parents) track = track || p.requires_grad();
    if (!track) return out;
    out.node()->requires_grad = true;
    auto& ps = out.node()->parents;
    ps.reserve(parents.size());
    for (Tensor& p : parents) ps.push_back(p.node_ptr());
    out.node()->backward_fn = std::move(backward_fn);
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic with broadcasting
// ---------------------------------------------------------------------------

namespace detail {

enum class Bcast { None, RightSuffix, LeftSuffix, RightScalar, LeftScalar };

// Supported broadcast forms: equal shapes; one side a single element; or the
// smaller shape equal to a trailing suffix of the larger (leading-dim
// broadcast).
inline Bcast broadcast_kind(const Shape& a, const Shape& b) {
    if (a == b) return Bcast::None;
    if (shape_numel(b) == 1) return Bcast::RightScalar;
    if (shape_numel(a) == 1) return Bcast::LeftScalar;
    auto is_suffix = [](const Shape& small, const Shape& big) {
        if (small.size() > big.size()) return false;
        return std::equal(small.rbegin(), small.rend(), big.rbegin());
    };
    if (is_suffix(b, a)) return Bcast::RightSuffix;
    if (is_suffix(a, b)) return Bcast::LeftSuffix;
    throw ShapeError("incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace detail

// op(a, b) elementwise with fwd(x, y) and partials dfx, dfy evaluated on the
// broadcast-expanded operands.
template <typename F, typename DX, typename DY>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, F fwd, DX dfx, DY dfy) {
    using detail::Bcast;
    const Bcast kind = detail::broadcast_kind(a.shape(), b.shape());
    const bool b_small = (kind == Bcast::RightSuffix || kind == Bcast::RightScalar);
    const Tensor& big = (kind == Bcast::LeftSuffix || kind == Bcast::LeftScalar) ? b : a;
    const Tensor& small = (&big == &a) ? b : a;
    const size_t n = static_cast<size_t>(big.numel());
    const size_t inner = (kind == Bcast::None) ? n : static_cast<size_t>(small.numel());

    std::vector<double> out(n);
    const auto& da = a.data();
    const auto& db = b.data();
    if (kind == Bcast::None) {
        for (size_t i = 0; i < n; ++i) out[i] = fwd(da[i], db[i]);
    } else if (b_small) {
        for (size_t i = 0; i < n; ++i) out[i] = fwd(da[i], db[i % inner]);
    } else {
        for (size_t i = 0; i < n; ++i) out[i] = fwd(da[i % inner], db[i]);
    }

    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return make_op_result(
        big.shape(), std::move(out), {a, b},
        [an, bn, kind, inner, n, dfx, dfy, b_small](detail::TensorNode& self) {
            const auto& g = self.grad;
            auto value_at = [&](const std::vector<double>& v, size_t i, bool is_small) {
                return is_small ? v[i % inner] : v[i];
            };
            if (an->requires_grad) {
                an->ensure_grad();
                const bool a_small = !b_small && kind != detail::Bcast::None;
                for (size_t i = 0; i < n; ++i) {
                    const double x = value_at(an->data, i, a_small);
                    const double y = value_at(bn->data, i, b_small && kind != detail::Bcast::None);
                    an->grad[a_small ? i % inner : i] += g[i] * dfx(x, y);
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const bool small = b_small && kind != detail::Bcast::None;
                const bool a_small = !b_small && kind != detail::Bcast::None;
                for (size_t i = 0; i < n; ++i) {
                    const double x = value_at(an->data, i, a_small);
                    const double y = value_at(bn->data, i, small);
                    bn->grad[small ? i % inner : i] += g[i] * dfy(x, y);
                }
            }
        });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

template <typename F, typename D>
Tensor unary_elementwise(const Tensor& x, F fwd, D dfd) {
    const size_t n = static_cast<size_t>(x.numel());
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (size_t i = 0; i < n; ++i) out[i] = fwd(dx[i]);
    auto xn = x.node_ptr();
    // dfd receives (input, output) so ops may reuse the forward value.
    return make_op_result(x.shape(), std::move(out), {x},
                          [xn, n, dfd](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (size_t i = 0; i < n; ++i) {
                                  xn->grad[i] += self.grad[i] * dfd(xn->data[i], self.data[i]);
                              }
                          });
}

inline double sigmoid_stable(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return sigmoid_stable(v); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
    return unary_elementwise(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor scale(const Tensor& x, double c) {
    return unary_elementwise(
        x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
    return unary_elementwise(
        x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Matrix multiply (2-D)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = da[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &db[static_cast<size_t>(p) * n];
            double* orow = &out[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return make_op_result(
        {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::TensorNode& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = dC * B^T
                for (int i = 0; i < m; ++i) {
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = &g[static_cast<size_t>(i) * n];
                        const double* brow = &bn->data[static_cast<size_t>(p) * n];
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        an->grad[static_cast<size_t>(i) * k + p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T * dC
                for (int i = 0; i < m; ++i) {
                    const double* arow = &an->data[static_cast<size_t>(i) * k];
                    const double* grow = &g[static_cast<size_t>(i) * n];
                    for (int p = 0; p < k; ++p) {
                        const double av = arow[p];
                        if (av == 0.0) continue;
                        double* brow = &bn->grad[static_cast<size_t>(p) * n];
                        for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    auto xn = x.node_ptr();
    const size_t n = static_cast<size_t>(x.numel());
    return make_op_result(std::move(shape), x.data(), {x}, [xn, n](detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < n; ++i) xn->grad[i] += self.grad[i];
    });
}

// Concatenate along the last dimension; leading dimensions must match.
inline Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    int last = 0;
    for (const Tensor& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw ShapeError("concat: leading dims differ: " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        last += p.shape().back();
    }
    Shape out_shape = lead;
    out_shape.push_back(last);
    const size_t rows = static_cast<size_t>(shape_numel(lead.empty() ? Shape{1} : lead));
    std::vector<double> out(rows * last);
    size_t col_off = 0;
    for (const Tensor& p : parts) {
        const size_t w = static_cast<size_t>(p.shape().back());
        const auto& pd = p.data();
        for (size_t r = 0; r < rows; ++r) {
            std::copy_n(&pd[r * w], w, &out[r * last + col_off]);
        }
        col_off += w;
    }
    std::vector<std::pair<std::shared_ptr<detail::TensorNode>, size_t>> srcs;
    size_t off = 0;
    for (const Tensor& p : parts) {
        srcs.emplace_back(p.node_ptr(), off);
        off += static_cast<size_t>(p.shape().back());
    }
    const size_t total = static_cast<size_t>(last);
    return make_op_result(std::move(out_shape), std::move(out), parts,
                          [srcs, rows, total](detail::TensorNode& self) {
                              for (const auto& [node, col_off2] : srcs) {
                                  if (!node->requires_grad) continue;
                                  node->ensure_grad();
                                  const size_t w = node->data.size() / rows;
                                  for (size_t r = 0; r < rows; ++r) {
                                      const double* g = &self.grad[r * total + col_off2];
                                      double* dst = &node->grad[r * w];
                                      for (size_t j = 0; j < w; ++j) dst[j] += g[j];
                                  }
                              }
                          });
}

// Slice [start, start + len) along the last dimension.
inline Tensor slice(const Tensor& x, int start, int len) {
    const int last = x.shape().back();
    if (start < 0 || len <= 0 || start + len > last)
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + std::to_string(last));
    Shape out_shape = x.shape();
    out_shape.back() = len;
    const size_t rows = static_cast<size_t>(x.numel() / last);
    std::vector<double> out(rows * static_cast<size_t>(len));
    const auto& dx = x.data();
    for (size_t r = 0; r < rows; ++r) {
        std::copy_n(&dx[r * last + start], len, &out[r * static_cast<size_t>(len)]);
    }
    auto xn = x.node_ptr();
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [xn, rows, last, start, len](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (size_t r = 0; r < rows; ++r) {
                                  const double* g = &self.grad[r * static_cast<size_t>(len)];
                                  double* dst = &xn->grad[r * last + start];
                                  for (int j = 0; j < len; ++j) dst[j] += g[j];
                              }
                          });
}

// Select rows (first dimension); indices may repeat.
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
    if (x.rank() < 1) throw ShapeError("gather_rows: rank-0 input");
    const int n = x.dim(0);
    const size_t stride = static_cast<size_t>(x.numel() / n);
    Shape out_shape = x.shape();
    out_shape[0] = static_cast<int>(indices.size());
    if (indices.empty()) throw ContractError("gather_rows: empty index list");
    std::vector<double> out(indices.size() * stride);
    const auto& dx = x.data();
    for (size_t r = 0; r < indices.size(); ++r) {
        const int idx = indices[r];
        if (idx < 0 || idx >= n)
            throw ContractError("gather_rows: index " + std::to_string(idx) + " out of " +
                                std::to_string(n));
        std::copy_n(&dx[static_cast<size_t>(idx) * stride], stride, &out[r * stride]);
    }
    auto xn = x.node_ptr();
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [xn, indices, stride](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (size_t r = 0; r < indices.size(); ++r) {
                                  const double* g = &self.grad[r * stride];
                                  double* dst =
                                      &xn->grad[static_cast<size_t>(indices[r]) * stride];
                                  for (size_t j = 0; j < stride; ++j) dst[j] += g[j];
                              }
                          });
}

inline Tensor sum_all(const Tensor& x) {
    const auto& dx = x.data();
    double acc = 0.0;
    for (double v : dx) acc += v;
    auto xn = x.node_ptr();
    return make_op_result({1}, {acc}, {x}, [xn](detail::TensorNode& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = self.grad[0];
        for (double& v : xn->grad) v += g;
    });
}

// ---------------------------------------------------------------------------
// Segment ops (contiguous segments over the first dimension)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_segment_ids(const std::vector<int>& seg_ids, size_t n, int num_segments) {
    if (seg_ids.size() != n)
        throw ContractError("segment ids length " + std::to_string(seg_ids.size()) +
                            " does not match leading dim " + std::to_string(n));
    int prev = -1;
    for (int id : seg_ids) {
        if (id < prev)
            throw ContractError("segment ids must be sorted ascending");
        if (id < 0 || (num_segments >= 0 && id >= num_segments))
            throw ContractError("segment id " + std::to_string(id) + " out of range");
        prev = id;
    }
}

// Half-open [begin, end) row ranges of equal-id runs.
inline std::vector<std::pair<size_t, size_t>> segment_runs(const std::vector<int>& seg_ids) {
    std::vector<std::pair<size_t, size_t>> runs;
    size_t begin = 0;
    for (size_t i = 1; i <= seg_ids.size(); ++i) {
        if (i == seg_ids.size() || seg_ids[i] != seg_ids[begin]) {
            runs.emplace_back(begin, i);
            begin = i;
        }
    }
    return runs;
}

}  // namespace detail

// Softmax over rows within each contiguous segment, independently per
// trailing column.
inline Tensor segment_softmax(const Tensor& x, const std::vector<int>& seg_ids) {
    if (x.rank() < 1) throw ShapeError("segment_softmax: rank-0 input");
    const size_t n = static_cast<size_t>(x.dim(0));
    const size_t cols = static_cast<size_t>(x.numel()) / n;
    detail::check_segment_ids(seg_ids, n, -1);
    const auto runs = detail::segment_runs(seg_ids);
    std::vector<double> out(x.data().size());
    const auto& dx = x.data();
    for (const auto& [b, e] : runs) {
        for (size_t c = 0; c < cols; ++c) {
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t r = b; r < e; ++r) mx = std::max(mx, dx[r * cols + c]);
            double denom = 0.0;
            for (size_t r = b; r < e; ++r) denom += std::exp(dx[r * cols + c] - mx);
            for (size_t r = b; r < e; ++r) out[r * cols + c] = std::exp(dx[r * cols + c] - mx) / denom;
        }
    }
    auto xn = x.node_ptr();
    return make_op_result(x.shape(), std::move(out), {x},
                          [xn, runs, cols](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              const auto& y = self.data;
                              const auto& g = self.grad;
                              for (const auto& [b, e] : runs) {
                                  for (size_t c = 0; c < cols; ++c) {
                                      double dot = 0.0;
                                      for (size_t r = b; r < e; ++r)
                                          dot += g[r * cols + c] * y[r * cols + c];
                                      for (size_t r = b; r < e; ++r)
                                          xn->grad[r * cols + c] +=
                                              y[r * cols + c] * (g[r * cols + c] - dot);
                                  }
                              }
                          });
}

// Sum rows within each segment into out[segment]; absent segments stay zero.
inline Tensor segment_sum(const Tensor& x, const std::vector<int>& seg_ids, int num_segments) {
    if (x.rank() < 1) throw ShapeError("segment_sum: rank-0 input");
    if (num_segments <= 0) throw ContractError("segment_sum: num_segments must be positive");
    const size_t n = static_cast<size_t>(x.dim(0));
    const size_t cols = static_cast<size_t>(x.numel()) / n;
    detail::check_segment_ids(seg_ids, n, num_segments);
    Shape out_shape = x.shape();
    out_shape[0] = num_segments;
    std::vector<double> out(static_cast<size_t>(num_segments) * cols, 0.0);
    const auto& dx = x.data();
    for (size_t r = 0; r < n; ++r) {
        double* dst = &out[static_cast<size_t>(seg_ids[r]) * cols];
        const double* src = &dx[r * cols];
        for (size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
    auto xn = x.node_ptr();
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [xn, seg_ids, cols, n](detail::TensorNode& self) {
                              if (!xn->requires_grad) return;
                              xn->ensure_grad();
                              for (size_t r = 0; r < n; ++r) {
                                  const double* g =
                                      &self.grad[static_cast<size_t>(seg_ids[r]) * cols];
                                  double* dst = &xn->grad[r * cols];
                                  for (size_t c = 0; c < cols; ++c) dst[c] += g[c];
                              }
                          });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Central-difference check of reverse-mode gradients for a scalar-valued f.
// Returns the maximum relative error |a - b| / max(1, |a|, |b|).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                         double h = 1e-5) {
    Tensor x = Tensor::from(x0.shape(), x0.data(), true);
    Tensor y = f(x);
    if (y.numel() != 1) throw ContractError("grad_check: objective must be scalar");
    y.backward();
    const std::vector<double> analytic = x.grad();

    std::vector<double> base = x0.data();
    double worst = 0.0;
    for (size_t i = 0; i < base.size(); ++i) {
        NoGradGuard ng;
        std::vector<double> plus = base, minus = base;
        plus[i] += h;
        minus[i] -= h;
        const double fp = f(Tensor::from(x0.shape(), std::move(plus))).value();
        const double fm = f(Tensor::from(x0.shape(), std::move(minus))).value();
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic[i])});
        worst = std::max(worst, std::fabs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace sparscene
