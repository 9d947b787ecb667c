#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "recognet/errors.hpp"

namespace recognet {

// Extents, outermost first. 4-D activations are laid out [N, C, H, W] with W
// fastest; the slice index lives in N and is reinterpreted as the time axis
// by the recurrent layers.
using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily; same length as data when present
    bool requires_grad = false;
    // Graph edges toward inputs. Populated only when requires_grad is true.
    std::vector<Tensor<T>> parents;
    std::function<void(TensorNode<T>&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return make(std::move(shape), T(0), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        return make(std::move(shape), value, requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != shape_numel(shape))
            throw std::invalid_argument("Tensor::from_data: " + std::to_string(values.size()) +
                                        " values for shape " + shape_str(shape));
        auto t = Tensor(std::make_shared<detail::TensorNode<T>>());
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int extent(int axis) const { return node_->shape[axis]; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    T item() const {
        if (numel() != 1)
            throw std::invalid_argument("Tensor::item on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    // Gradient buffer; allocated on demand. Valid after backward() for any
    // leaf tensor with requires_grad.
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    bool all_finite() const {
        for (T v : node_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void assert_finite(const std::string& what) const {
        if (!all_finite()) throw NumericError("non-finite values in " + what);
    }

    // Reverse-mode gradient propagation from a scalar. Gradients of leaf
    // tensors accumulate (+=) across calls; intermediate gradients are
    // scratch and reset on every call. Callers reset leaves between steps.
    void backward() const {
        if (numel() != 1)
            throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                        shape_str(shape()));
        if (!node_->requires_grad) return;

        // Post-order over the subgraph that requires grad: every node ends
        // up after all of its inputs.
        std::vector<detail::TensorNode<T>*> order;
        std::unordered_set<detail::TensorNode<T>*> seen;
        struct Frame {
            detail::TensorNode<T>* n;
            size_t next;
        };
        std::vector<Frame> stack;
        stack.push_back({node_.get(), 0});
        seen.insert(node_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.n->parents.size()) {
                detail::TensorNode<T>* p = f.n->parents[f.next++].node_.get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.n);
                stack.pop_back();
            }
        }

        for (auto* n : order) {
            n->ensure_grad();
            if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), T(0));
        }
        node_->grad[0] += T(1);

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
        }
    }

    detail::TensorNode<T>* node() const { return node_.get(); }

    // Builds an op result. parents/backward_fn are dropped when no input
    // tracks gradients, so inference graphs stay flat.
    static Tensor make_result(Shape shape, std::vector<Tensor<T>> parents,
                              std::function<void(detail::TensorNode<T>&)> backward_fn) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p.requires_grad();
        Tensor out = zeros(std::move(shape), rg);
        if (rg) {
            out.node_->parents = std::move(parents);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode<T>> node) : node_(std::move(node)) {}

    static Tensor make(Shape shape, T fill, bool rg) {
        auto t = Tensor(std::make_shared<detail::TensorNode<T>>());
        const int64_t n = shape_numel(shape);
        for (int e : shape)
            if (e < 1)
                throw std::invalid_argument("Tensor extents must be >= 1, got " + shape_str(shape));
        t.node_->shape = std::move(shape);
        t.node_->data.assign(static_cast<size_t>(n), fill);
        t.node_->requires_grad = rg;
        return t;
    }

    std::shared_ptr<detail::TensorNode<T>> node_;
};

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// Strides for reading `in` at positions of `out`; broadcast axes (extent 1
// against >1) get stride 0. Ranks must match.
inline std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out,
                                              const char* op) {
    if (in.size() != out.size())
        throw std::invalid_argument(std::string(op) + ": rank mismatch " + shape_str(in) +
                                    " vs " + shape_str(out));
    auto st = row_major_strides(in);
    for (size_t i = 0; i < in.size(); ++i) {
        if (in[i] == out[i]) continue;
        if (in[i] == 1)
            st[i] = 0;
        else
            throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(i) +
                                        " not broadcastable, " + shape_str(in) + " vs " +
                                        shape_str(out));
    }
    return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
    Shape out(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || b[i] == 1)
            out[i] = a[i];
        else if (a[i] == 1)
            out[i] = b[i];
        else
            throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                        " vs " + shape_str(b) + " at axis " + std::to_string(i));
    }
    return out;
}

// Odometer walk over `out`, yielding linear offsets into two broadcast inputs.
template <typename F>
inline void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa,
                               const std::vector<int64_t>& sb, F&& f) {
    const int64_t n = shape_numel(out);
    const int r = static_cast<int>(out.size());
    std::vector<int> idx(out.size(), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t o = 0; o < n; ++o) {
        f(o, oa, ob);
        for (int ax = r - 1; ax >= 0; --ax) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < out[ax]) break;
            idx[ax] = 0;
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (same-rank broadcasting: extent 1 stretches)

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = Tensor<T>::make_result(
        out_shape, {a, b}, [a, b](detail::TensorNode<T>& self) mutable {
            auto accumulate = [&](Tensor<T>& p) {
                if (!p.requires_grad()) return;
                auto& g = p.grad();
                const auto sp = detail::broadcast_strides(p.shape(), self.shape, "add");
                const auto sz = detail::row_major_strides(self.shape);
                detail::for_each_broadcast(self.shape, sp, sz,
                                           [&](int64_t o, int64_t op, int64_t) { g[op] += self.grad[o]; });
            };
            accumulate(a);
            accumulate(b);
        });
    if (a.shape() == b.shape()) {
        const auto& da = a.data();
        const auto& db = b.data();
        auto& do_ = out.data();
        for (size_t i = 0; i < do_.size(); ++i) do_[i] = da[i] + db[i];
    } else {
        const auto sa = detail::broadcast_strides(a.shape(), out_shape, "add");
        const auto sb = detail::broadcast_strides(b.shape(), out_shape, "add");
        auto& dst = out.data();
        const auto& da = a.data();
        const auto& db = b.data();
        detail::for_each_broadcast(out_shape, sa, sb,
                                   [&](int64_t o, int64_t oa, int64_t ob) { dst[o] = da[oa] + db[ob]; });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    const Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "mul");
    const auto sa = detail::broadcast_strides(a.shape(), out_shape, "mul");
    const auto sb = detail::broadcast_strides(b.shape(), out_shape, "mul");
    Tensor<T> out = Tensor<T>::make_result(
        out_shape, {a, b}, [a, b, sa, sb](detail::TensorNode<T>& self) mutable {
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& db = b.data();
                detail::for_each_broadcast(self.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
                    ga[oa] += self.grad[o] * db[ob];
                });
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& da = a.data();
                detail::for_each_broadcast(self.shape, sa, sb, [&](int64_t o, int64_t oa, int64_t ob) {
                    gb[ob] += self.grad[o] * da[oa];
                });
            }
        });
    auto& dst = out.data();
    const auto& da = a.data();
    const auto& db = b.data();
    detail::for_each_broadcast(out_shape, sa, sb,
                               [&](int64_t o, int64_t oa, int64_t ob) { dst[o] = da[oa] * db[ob]; });
    return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T factor) {
    Tensor<T> out = Tensor<T>::make_result(a.shape(), {a}, [a, factor](detail::TensorNode<T>& self) mutable {
        if (!a.requires_grad()) return;
        auto& ga = a.grad();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * factor;
    });
    const auto& da = a.data();
    auto& dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = da[i] * factor;
    return out;
}

template <typename T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
    return add(a, scale(b, T(-1)));
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
    std::vector<T> y(x.data().size());
    for (size_t i = 0; i < y.size(); ++i) {
        const T v = x.data()[i];
        if (v >= T(0)) {
            y[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            y[i] = e / (T(1) + e);
        }
    }
    Tensor<T> out = Tensor<T>::make_result(x.shape(), {x}, [x, y](detail::TensorNode<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * y[i] * (T(1) - y[i]);
    });
    out.data() = y;
    return out;
}

template <typename T>
Tensor<T> tanh_op(Tensor<T> x) {
    std::vector<T> y(x.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x.data()[i]);
    Tensor<T> out = Tensor<T>::make_result(x.shape(), {x}, [x, y](detail::TensorNode<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (T(1) - y[i] * y[i]);
    });
    out.data() = y;
    return out;
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
    Tensor<T> out = Tensor<T>::make_result(x.shape(), {x}, [x](detail::TensorNode<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& dx = x.data();
        for (size_t i = 0; i < gx.size(); ++i)
            if (dx[i] > T(0)) gx[i] += self.grad[i];
    });
    const auto& dx = x.data();
    auto& dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = dx[i] > T(0) ? dx[i] : T(0);
    return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(Tensor<T> x) {
    Tensor<T> out = Tensor<T>::make_result({1}, {x}, [x](detail::TensorNode<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const T g = self.grad[0];
        for (auto& v : gx) v += g;
    });
    T acc = T(0);
    for (T v : x.data()) acc += v;
    out.data()[0] = acc;
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const T inv = T(1) / static_cast<T>(x.numel());
    return scale(sum(x), inv);
}

// ---------------------------------------------------------------------------
// Slicing and concatenation

template <typename T>
Tensor<T> concat(std::vector<Tensor<T>> parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    const int rank = static_cast<int>(first.size());
    if (axis < 0 || axis >= rank)
        throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for rank " +
                                    std::to_string(rank));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        if (static_cast<int>(p.shape().size()) != rank)
            throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i) {
            if (i == axis) continue;
            if (p.shape()[i] != first[i])
                throw std::invalid_argument("concat: off-axis extent mismatch at axis " +
                                            std::to_string(i) + ": " + shape_str(p.shape()) + " vs " +
                                            shape_str(first));
        }
        out_shape[axis] += p.shape()[axis];
    }

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < rank; ++i) inner *= out_shape[i];
    const int64_t out_axis = out_shape[axis];

    std::vector<Tensor<T>> parents = parts;
    Tensor<T> out = Tensor<T>::make_result(
        out_shape, std::move(parents),
        [parts, outer, inner, out_axis, axis](detail::TensorNode<T>& self) mutable {
            int64_t off = 0;
            for (auto& p : parts) {
                const int64_t pa = p.shape()[axis];
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (int64_t ou = 0; ou < outer; ++ou)
                        for (int64_t j = 0; j < pa; ++j) {
                            const T* src = self.grad.data() + ((ou * out_axis + off + j) * inner);
                            T* dst = gp.data() + ((ou * pa + j) * inner);
                            for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                        }
                }
                off += pa;
            }
        });

    auto& dst = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t pa = p.shape()[axis];
        const auto& src = p.data();
        for (int64_t ou = 0; ou < outer; ++ou)
            for (int64_t j = 0; j < pa; ++j)
                std::copy_n(src.data() + (ou * pa + j) * inner, inner,
                            dst.data() + (ou * out_axis + off + j) * inner);
        off += pa;
    }
    return out;
}

// Contiguous view copy of `length` extents starting at `start` along `axis`.
template <typename T>
Tensor<T> narrow(Tensor<T> x, int axis, int start, int length) {
    const Shape& s = x.shape();
    const int rank = static_cast<int>(s.size());
    if (axis < 0 || axis >= rank)
        throw std::invalid_argument("narrow: axis " + std::to_string(axis) + " out of range");
    if (start < 0 || length < 1 || start + length > s[axis])
        throw std::invalid_argument("narrow: range [" + std::to_string(start) + "," +
                                    std::to_string(start + length) + ") exceeds extent " +
                                    std::to_string(s[axis]));
    Shape out_shape = s;
    out_shape[axis] = length;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < rank; ++i) inner *= s[i];
    const int64_t in_axis = s[axis];

    Tensor<T> out = Tensor<T>::make_result(
        out_shape, {x}, [x, outer, inner, in_axis, start, length](detail::TensorNode<T>& self) mutable {
            if (!x.requires_grad()) return;
            auto& gx = x.grad();
            for (int64_t ou = 0; ou < outer; ++ou)
                for (int64_t j = 0; j < length; ++j) {
                    const T* src = self.grad.data() + (ou * length + j) * inner;
                    T* dst = gx.data() + (ou * in_axis + start + j) * inner;
                    for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                }
        });
    auto& dst = out.data();
    const auto& src = x.data();
    for (int64_t ou = 0; ou < outer; ++ou)
        for (int64_t j = 0; j < length; ++j)
            std::copy_n(src.data() + (ou * in_axis + start + j) * inner, inner,
                        dst.data() + (ou * length + j) * inner);
    return out;
}

}  // namespace recognet
