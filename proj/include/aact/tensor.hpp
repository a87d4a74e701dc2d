#pragma once
// Dense 64-bit tensors with tape-based reverse-mode differentiation.
//
// Values are flat row-major doubles. Every op validates shapes up front and
// throws std::invalid_argument naming the offending shapes. While grad
// recording is enabled (default), ops whose inputs are tracked append a node
// to a thread-local tape; creation order on the tape is already a topological
// order, so backward() is a single reverse sweep. The tape is freed when
// backward() returns; calling backward() again through the same graph reports
// a detached graph.
//
// Tensors are immutable once created, except for parameter values updated in
// place by the optimizer between recorded graphs. A tape is confined to one
// thread; tensor values may be shared read-only across threads.

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aact/rng.hpp"

namespace aact {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    if (shape.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(shape[i]);
    }
    return out;
}

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::string name;              // nonempty only for named parameters
    std::uint64_t tape_epoch = 0;  // epoch of the tape this value was recorded on
    std::int32_t tape_node = -1;   // set once at creation by the recording thread
};

struct Tape;

struct TapeNode {
    std::shared_ptr<TensorImpl> out;
    std::vector<double> grad;  // allocated lazily during backward
    // Accumulates this node's grad into its parents' grads (tape indices).
    std::function<void(Tape&, TapeNode&)> backward;
    std::vector<std::int32_t> parents;
};

struct Tape {
    std::vector<TapeNode> nodes;
    // Input resolution is keyed here rather than on the tensors themselves so
    // that tensors shared read-only across threads stay untouched.
    std::unordered_map<const TensorImpl*, std::int32_t> index_of;
    std::uint64_t epoch = 1;
    bool recording = true;

    std::vector<double>& grad_of(std::int32_t idx) {
        TapeNode& node = nodes[static_cast<std::size_t>(idx)];
        if (node.grad.empty()) node.grad.assign(node.out->data.size(), 0.0);
        return node.grad;
    }

    void clear() {
        nodes.clear();
        index_of.clear();
        ++epoch;
    }
};

inline Tape& tape() {
    thread_local Tape instance;
    return instance;
}

// Smallest |input| seen by relu while a KinkScope is active. Central
// differences are only valid at locally smooth points; gradient checks use
// this to redraw instances whose relu inputs sit within a step of the kink.
struct KinkWatch {
    bool active = false;
    double min_margin = 0.0;
};

inline KinkWatch& kink_watch() {
    thread_local KinkWatch instance;
    return instance;
}

}  // namespace detail

class KinkScope {
public:
    KinkScope() {
        detail::kink_watch().active = true;
        detail::kink_watch().min_margin = 1e300;
    }
    ~KinkScope() { detail::kink_watch().active = false; }
    double min_margin() const { return detail::kink_watch().min_margin; }
    KinkScope(const KinkScope&) = delete;
    KinkScope& operator=(const KinkScope&) = delete;
};

/// Disables tape recording for the current thread while alive. Used by the
/// finite-difference oracle and by evaluation-only forward passes.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::tape().recording) { detail::tape().recording = false; }
    ~NoGradGuard() { detail::tape().recording = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values) {
        if (values.size() != shape_numel(shape))
            throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                        " values do not fill shape " + shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<detail::TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(values);
        return t;
    }

    static Tensor zeros(Shape shape) {
        std::vector<double> values(shape_numel(shape), 0.0);
        return from(std::move(shape), std::move(values));
    }

    static Tensor full(Shape shape, double value) {
        std::vector<double> values(shape_numel(shape), value);
        return from(std::move(shape), std::move(values));
    }

    static Tensor scalar(double value) { return from({}, {value}); }

    /// Named trainable parameter. The name keys GradientMap entries,
    /// optimizer state and checkpoint records.
    static Tensor param(std::string name, Shape shape, std::vector<double> values) {
        if (name.empty()) throw std::invalid_argument("param: empty name");
        Tensor t = from(std::move(shape), std::move(values));
        t.impl_->requires_grad = true;
        t.impl_->name = std::move(name);
        return t;
    }

    static Tensor param_uniform(std::string name, Shape shape, double lo, double hi, Rng& rng) {
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = rng.uniform(lo, hi);
        return param(std::move(name), std::move(shape), std::move(values));
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }
    std::size_t cols() const { return impl_->shape.empty() ? 1 : impl_->shape.back(); }
    const std::vector<double>& data() const { return impl_->data; }
    double at(std::size_t i) const { return impl_->data[i]; }

    double item() const {
        if (numel() != 1)
            throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    const std::string& name() const { return impl_->name; }

    /// In-place value access, reserved for the optimizer and loaders; never
    /// call on a tensor participating in a live graph.
    std::vector<double>& mutable_data() { return impl_->data; }

    /// Value copy detached from any graph.
    Tensor detached() const { return from(impl_->shape, impl_->data); }

    bool tracked() const {
        return impl_ && (impl_->requires_grad || impl_->tape_epoch == detail::tape().epoch);
    }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Gradient of a scalar with respect to each named parameter; keys absent
/// from the map are zero gradients.
using GradientMap = std::map<std::string, Tensor>;

/// Named parameter collection (ordered, so iteration is deterministic).
using ParameterMap = std::map<std::string, Tensor>;

namespace detail {

inline std::int32_t tape_index_for(Tape& tp, const Tensor& t) {
    auto impl = t.impl();
    auto [it, inserted] = tp.index_of.try_emplace(impl.get(), 0);
    if (!inserted) return it->second;
    const auto idx = static_cast<std::int32_t>(tp.nodes.size());
    it->second = idx;
    tp.nodes.push_back(TapeNode{std::move(impl), {}, nullptr, {}});
    return idx;
}

/// Wraps a computed value in a Tensor and, when recording and any input is
/// tracked, appends a tape node holding the backward callback.
inline Tensor record(Shape shape, std::vector<double> value,
                     std::initializer_list<const Tensor*> inputs,
                     std::function<void(Tape&, TapeNode&)> backward) {
    Tensor out = Tensor::from(std::move(shape), std::move(value));
    Tape& tp = tape();
    if (!tp.recording) return out;
    bool any_tracked = false;
    for (const Tensor* in : inputs)
        if (in->tracked()) any_tracked = true;
    if (!any_tracked) return out;

    std::vector<std::int32_t> parents;
    parents.reserve(inputs.size());
    for (const Tensor* in : inputs) parents.push_back(tape_index_for(tp, *in));

    auto impl = out.impl();
    const auto idx = static_cast<std::int32_t>(tp.nodes.size());
    impl->tape_epoch = tp.epoch;
    impl->tape_node = idx;
    tp.index_of.emplace(impl.get(), idx);
    tp.nodes.push_back(TapeNode{impl, {}, std::move(backward), std::move(parents)});
    return out;
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and structural ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("add", a, b);
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) + b.at(i);
    return detail::record(a.shape(), std::move(value), {&a, &b},
                          [](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                  ga[i] += node.grad[i];
                                  gb[i] += node.grad[i];
                              }
                          });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("sub", a, b);
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) - b.at(i);
    return detail::record(a.shape(), std::move(value), {&a, &b},
                          [](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                  ga[i] += node.grad[i];
                                  gb[i] -= node.grad[i];
                              }
                          });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("mul", a, b);
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) * b.at(i);
    auto ia = a.impl();
    auto ib = b.impl();
    return detail::record(a.shape(), std::move(value), {&a, &b},
                          [ia, ib](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i) {
                                  ga[i] += node.grad[i] * ib->data[i];
                                  gb[i] += node.grad[i] * ia->data[i];
                              }
                          });
}

inline Tensor scale(const Tensor& a, double factor) {
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) * factor;
    return detail::record(a.shape(), std::move(value), {&a},
                          [factor](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i)
                                  ga[i] += node.grad[i] * factor;
                          });
}

inline Tensor add_scalar(const Tensor& a, double constant) {
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) + constant;
    return detail::record(a.shape(), std::move(value), {&a},
                          [](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i)
                                  ga[i] += node.grad[i];
                          });
}

/// Adds a length-d row vector to every row of a T x d matrix.
inline Tensor add_rowvec(const Tensor& x, const Tensor& row) {
    if (x.shape().size() != 2 || row.shape().size() != 1 || x.cols() != row.numel())
        throw std::invalid_argument("add_rowvec: shapes " + shape_str(x.shape()) + " vs " +
                                    shape_str(row.shape()));
    const std::size_t rows = x.rows(), d = x.cols();
    std::vector<double> value(x.numel());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) value[r * d + c] = x.at(r * d + c) + row.at(c);
    return detail::record(x.shape(), std::move(value), {&x, &row},
                          [rows, d](detail::Tape& tp, detail::TapeNode& node) {
                              auto& gx = tp.grad_of(node.parents[0]);
                              auto& gr = tp.grad_of(node.parents[1]);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < d; ++c) {
                                      gx[r * d + c] += node.grad[r * d + c];
                                      gr[c] += node.grad[r * d + c];
                                  }
                          });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> value(a.numel());
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
    if (detail::kink_watch().active) {
        auto& watch = detail::kink_watch();
        for (std::size_t i = 0; i < a.numel(); ++i) {
            const double margin = std::abs(a.at(i));
            if (margin < watch.min_margin) watch.min_margin = margin;
        }
    }
    auto ia = a.impl();
    return detail::record(a.shape(), std::move(value), {&a},
                          [ia](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i)
                                  if (ia->data[i] > 0.0) ga[i] += node.grad[i];
                          });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::size_t m = a.shape()[0], p = a.shape()[1], n = b.shape()[1];
    std::vector<double> value(m * n, 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = da[i * p + k];
            for (std::size_t j = 0; j < n; ++j) value[i * n + j] += aik * db[k * n + j];
        }
    auto ia = a.impl();
    auto ib = b.impl();
    return detail::record({m, n}, std::move(value), {&a, &b},
                          [ia, ib, m, p, n](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              const auto& g = node.grad;
                              // dA = g . B^T, dB = A^T . g
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const double gij = g[i * n + j];
                                      if (gij == 0.0) continue;
                                      for (std::size_t k = 0; k < p; ++k) {
                                          ga[i * p + k] += gij * ib->data[k * n + j];
                                          gb[k * n + j] += gij * ia->data[i * p + k];
                                      }
                                  }
                          });
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2)
        throw std::invalid_argument("transpose: need rank-2, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> value(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) value[j * m + i] = a.at(i * n + j);
    return detail::record({n, m}, std::move(value), {&a},
                          [m, n](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j)
                                      ga[i * n + j] += node.grad[j * m + i];
                          });
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
        throw std::invalid_argument("concat_rows: shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::size_t d = a.cols();
    std::vector<double> value;
    value.reserve(a.numel() + b.numel());
    value.insert(value.end(), a.data().begin(), a.data().end());
    value.insert(value.end(), b.data().begin(), b.data().end());
    const std::size_t na = a.numel();
    return detail::record({a.rows() + b.rows(), d}, std::move(value), {&a, &b},
                          [na](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              for (std::size_t i = 0; i < na; ++i) ga[i] += node.grad[i];
                              for (std::size_t i = na; i < node.grad.size(); ++i)
                                  gb[i - na] += node.grad[i];
                          });
}

inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
    if (a.shape().size() != 2 || start + count > a.rows())
        throw std::invalid_argument("slice_rows: rows [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of " +
                                    shape_str(a.shape()));
    const std::size_t d = a.cols();
    std::vector<double> value(a.data().begin() + static_cast<std::ptrdiff_t>(start * d),
                              a.data().begin() + static_cast<std::ptrdiff_t>((start + count) * d));
    return detail::record({count, d}, std::move(value), {&a},
                          [start, d](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i)
                                  ga[start * d + i] += node.grad[i];
                          });
}

/// Mean over the rows of a T x d matrix, yielding a length-d vector.
inline Tensor mean_rows(const Tensor& a) {
    if (a.shape().size() != 2 || a.rows() == 0)
        throw std::invalid_argument("mean_rows: need nonempty rank-2, got " +
                                    shape_str(a.shape()));
    const std::size_t rows = a.rows(), d = a.cols();
    std::vector<double> value(d, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) value[c] += a.at(r * d + c);
    for (double& v : value) v /= static_cast<double>(rows);
    return detail::record({d}, std::move(value), {&a},
                          [rows, d](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              const double inv = 1.0 / static_cast<double>(rows);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < d; ++c)
                                      ga[r * d + c] += node.grad[c] * inv;
                          });
}

/// Same data under a new shape; gradients pass through untouched.
inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " +
                                    shape_str(shape) + " changes element count");
    std::vector<double> value = a.data();
    return detail::record(std::move(shape), std::move(value), {&a},
                          [](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              for (std::size_t i = 0; i < node.grad.size(); ++i)
                                  ga[i] += node.grad[i];
                          });
}

inline Tensor sum_all(const Tensor& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) total += a.at(i);
    return detail::record({}, {total}, {&a}, [](detail::Tape& tp, detail::TapeNode& node) {
        auto& ga = tp.grad_of(node.parents[0]);
        for (double& g : ga) g += node.grad[0];
    });
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

/// Numerically stable softmax along `axis` of a rank-1 or rank-2 tensor.
/// Slices along the axis are nonnegative and sum to 1.
inline Tensor softmax(const Tensor& x, std::size_t axis = 0) {
    const std::size_t rank = x.shape().size();
    if (rank == 0 || rank > 2 || axis >= rank)
        throw std::invalid_argument("softmax: invalid axis " + std::to_string(axis) +
                                    " for shape " + shape_str(x.shape()));
    // View the tensor as `slices` independent lines of length `len`.
    const std::size_t len = x.shape()[axis];
    const std::size_t slices = x.numel() / len;
    const bool columns = rank == 2 && axis == 0;
    const std::size_t stride = columns ? x.shape()[1] : 1;

    std::vector<double> value(x.numel());
    for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = columns ? s : s * len;
        double max_v = x.at(base);
        for (std::size_t i = 1; i < len; ++i)
            if (x.at(base + i * stride) > max_v) max_v = x.at(base + i * stride);
        double denom = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = std::exp(x.at(base + i * stride) - max_v);
            value[base + i * stride] = e;
            denom += e;
        }
        for (std::size_t i = 0; i < len; ++i) value[base + i * stride] /= denom;
    }
    return detail::record(x.shape(), std::move(value), {&x},
                          [len, slices, stride, columns](detail::Tape& tp,
                                                         detail::TapeNode& node) {
                              auto& gx = tp.grad_of(node.parents[0]);
                              const auto& y = node.out->data;
                              for (std::size_t s = 0; s < slices; ++s) {
                                  const std::size_t base = columns ? s : s * len;
                                  double dot = 0.0;
                                  for (std::size_t i = 0; i < len; ++i)
                                      dot += node.grad[base + i * stride] * y[base + i * stride];
                                  for (std::size_t i = 0; i < len; ++i) {
                                      const std::size_t idx = base + i * stride;
                                      gx[idx] += y[idx] * (node.grad[idx] - dot);
                                  }
                              }
                          });
}

/// Per-row normalization to zero mean and unit variance (population variance,
/// epsilon inside the square root), then an affine gamma * x + beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t rank = x.shape().size();
    if (rank == 0 || rank > 2)
        throw std::invalid_argument("layer_norm: need rank-1 or rank-2, got " +
                                    shape_str(x.shape()));
    const std::size_t d = x.cols();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw std::invalid_argument("layer_norm: gamma " + shape_str(gamma.shape()) + ", beta " +
                                    shape_str(beta.shape()) + " do not match row width " +
                                    std::to_string(d));
    const std::size_t rows = x.numel() / d;

    std::vector<double> value(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += x.at(r * d + c);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dev = x.at(r * d + c) - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (x.at(r * d + c) - mean) * inv;
            (*xhat)[r * d + c] = h;
            value[r * d + c] = gamma.at(c) * h + beta.at(c);
        }
    }
    auto igamma = gamma.impl();
    return detail::record(
        x.shape(), std::move(value), {&x, &gamma, &beta},
        [rows, d, xhat, inv_std, igamma](detail::Tape& tp, detail::TapeNode& node) {
            auto& gx = tp.grad_of(node.parents[0]);
            auto& ggamma = tp.grad_of(node.parents[1]);
            auto& gbeta = tp.grad_of(node.parents[2]);
            const auto& g = node.grad;
            for (std::size_t r = 0; r < rows; ++r) {
                double sum_dh = 0.0, sum_dh_h = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const std::size_t idx = r * d + c;
                    const double dh = g[idx] * igamma->data[c];
                    sum_dh += dh;
                    sum_dh_h += dh * (*xhat)[idx];
                    ggamma[c] += g[idx] * (*xhat)[idx];
                    gbeta[c] += g[idx];
                }
                const double inv = (*inv_std)[r];
                const double mean_dh = sum_dh / static_cast<double>(d);
                const double mean_dh_h = sum_dh_h / static_cast<double>(d);
                for (std::size_t c = 0; c < d; ++c) {
                    const std::size_t idx = r * d + c;
                    const double dh = g[idx] * igamma->data[c];
                    gx[idx] += inv * (dh - mean_dh - (*xhat)[idx] * mean_dh_h);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// loss primitives
// ---------------------------------------------------------------------------

inline constexpr double kProbClamp = 1e-12;

/// Mean over all elements of (a - b)^2.
inline Tensor mse(const Tensor& a, const Tensor& b) {
    detail::check_same_shape("mse", a, b);
    const std::size_t n = a.numel();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = a.at(i) - b.at(i);
        total += diff * diff;
    }
    auto ia = a.impl();
    auto ib = b.impl();
    return detail::record({}, {total / static_cast<double>(n)}, {&a, &b},
                          [ia, ib, n](detail::Tape& tp, detail::TapeNode& node) {
                              auto& ga = tp.grad_of(node.parents[0]);
                              auto& gb = tp.grad_of(node.parents[1]);
                              const double c = 2.0 * node.grad[0] / static_cast<double>(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                  const double diff = ia->data[i] - ib->data[i];
                                  ga[i] += c * diff;
                                  gb[i] -= c * diff;
                              }
                          });
}

/// Cross-entropy -sum_c target_c * ln(max(pred_c, 1e-12)) against a soft
/// target distribution. Gradients flow into both arguments when tracked.
inline Tensor cross_entropy(const Tensor& pred, const Tensor& target) {
    detail::check_same_shape("cross_entropy", pred, target);
    if (pred.shape().size() != 1)
        throw std::invalid_argument("cross_entropy: need rank-1, got " + shape_str(pred.shape()));
    const std::size_t n = pred.numel();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = pred.at(i) < kProbClamp ? kProbClamp : pred.at(i);
        total -= target.at(i) * std::log(p);
    }
    auto ip = pred.impl();
    auto it = target.impl();
    return detail::record({}, {total}, {&pred, &target},
                          [ip, it, n](detail::Tape& tp, detail::TapeNode& node) {
                              auto& gp = tp.grad_of(node.parents[0]);
                              auto& gt = tp.grad_of(node.parents[1]);
                              const double g = node.grad[0];
                              for (std::size_t i = 0; i < n; ++i) {
                                  const double p = ip->data[i];
                                  if (p > kProbClamp) gp[i] -= g * it->data[i] / p;
                                  const double pc = p < kProbClamp ? kProbClamp : p;
                                  gt[i] -= g * std::log(pc);
                              }
                          });
}

/// Cross-entropy against a hard class index (one-hot target).
inline Tensor cross_entropy(const Tensor& pred, std::size_t target_class) {
    if (pred.shape().size() != 1)
        throw std::invalid_argument("cross_entropy: need rank-1, got " + shape_str(pred.shape()));
    if (target_class >= pred.numel())
        throw std::invalid_argument("cross_entropy: class " + std::to_string(target_class) +
                                    " out of range for " + std::to_string(pred.numel()) +
                                    " classes");
    const double p = pred.at(target_class) < kProbClamp ? kProbClamp : pred.at(target_class);
    auto ip = pred.impl();
    return detail::record({}, {-std::log(p)}, {&pred},
                          [ip, target_class](detail::Tape& tp, detail::TapeNode& node) {
                              auto& gp = tp.grad_of(node.parents[0]);
                              const double pv = ip->data[target_class];
                              if (pv > kProbClamp) gp[target_class] -= node.grad[0] / pv;
                          });
}

/// Value copy cut off from the graph; downstream ops treat it as a constant.
inline Tensor stop_gradient(const Tensor& x) { return x.detached(); }

// ---------------------------------------------------------------------------
// backward / finite differences
// ---------------------------------------------------------------------------

/// Reverse-mode gradients of a recorded scalar with respect to every named
/// parameter it depends on. Frees the tape; a constant scalar (nothing
/// recorded) yields an empty map, a scalar whose tape is already gone is a
/// detached-graph error.
inline GradientMap backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    detail::Tape& tp = detail::tape();
    auto impl = loss.impl();
    GradientMap grads;
    if (impl->tape_epoch == 0) return grads;  // constant: zero gradients everywhere
    if (impl->tape_epoch != tp.epoch)
        throw std::runtime_error("backward: detached graph (tape already consumed)");

    tp.grad_of(impl->tape_node)[0] = 1.0;
    for (std::int32_t i = impl->tape_node; i >= 0; --i) {
        detail::TapeNode& node = tp.nodes[static_cast<std::size_t>(i)];
        if (node.grad.empty() || !node.backward) continue;
        node.backward(tp, node);
    }
    for (detail::TapeNode& node : tp.nodes) {
        if (node.backward || !node.out->requires_grad) continue;  // leaves only
        if (node.grad.empty() || node.out->name.empty()) continue;
        grads.emplace(node.out->name, Tensor::from(node.out->shape, std::move(node.grad)));
    }
    tp.clear();
    return grads;
}

/// Central-difference gradient oracle: per coordinate,
/// (f(theta + step e) - f(theta - step e)) / (2 step). Parameters are
/// perturbed in place and restored; f runs with recording disabled.
inline GradientMap finite_diff_grad(const std::function<double()>& f, ParameterMap& params,
                                    double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
    NoGradGuard guard;
    GradientMap out;
    for (auto& [name, tensor] : params) {
        Tensor param = tensor;
        std::vector<double> grad(param.numel());
        auto& values = param.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + step;
            const double up = f();
            values[i] = original - step;
            const double down = f();
            values[i] = original;
            grad[i] = (up - down) / (2.0 * step);
        }
        out.emplace(name, Tensor::from(param.shape(), std::move(grad)));
    }
    return out;
}

/// Worst-case relative disagreement over the numerically checked parameters
/// (absent analytic entries count as zero gradients). Coordinates compare as
/// |a-b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
/// amplifying finite-difference noise.
inline double max_relative_error(const GradientMap& analytic, const GradientMap& numeric,
                                 double floor = 1e-3) {
    double worst = 0.0;
    for (const auto& [name, num] : numeric) {
        auto it = analytic.find(name);
        for (std::size_t i = 0; i < num.numel(); ++i) {
            const double a = it == analytic.end() ? 0.0 : it->second.at(i);
            const double b = num.at(i);
            double denom = std::abs(a) > std::abs(b) ? std::abs(a) : std::abs(b);
            if (denom < floor) denom = floor;
            const double err = std::abs(a - b) / denom;
            if (err > worst) worst = err;
        }
    }
    return worst;
}

}  // namespace aact
