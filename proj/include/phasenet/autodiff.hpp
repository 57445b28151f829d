#pragma once

// Reverse-mode differentiation over dense double tensors.
//
// A Tape records every primitive in the order it is executed (define-by-run),
// so node ids are already a topological order and backward() is a single
// reverse sweep. A Var is a light handle (tape, node id). Trainable weights
// live outside any tape as Parameters; binding one to a tape creates a leaf
// whose gradient is added into Parameter::grad when backward() runs.
//
// Broadcasting is limited to scalar scaling and row-vector bias addition.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phasenet/error.hpp"
#include "phasenet/tensor.hpp"

namespace phasenet::ad {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() {
        if (grad.shape() != value.shape()) grad = Tensor(value.shape());
        else grad.fill(0.0);
    }
};

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    const Tensor& grad() const;
    bool requires_grad() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Tensor v) { return push(std::move(v), {}, nullptr, false, "const"); }

    // Leaf owned by the tape whose gradient is read back through Var::grad().
    Var variable(Tensor v) { return push(std::move(v), {}, nullptr, grad_enabled_, "leaf"); }

    // Leaf bound to an external Parameter; repeated binds return the same node.
    Var param(Parameter& p) {
        if (auto it = params_.find(&p); it != params_.end()) return Var(this, it->second);
        Var v = push(p.value, {}, nullptr, grad_enabled_, "param");
        nodes_[v.id_].param = &p;
        params_.emplace(&p, v.id_);
        return v;
    }

    // Records a primitive. The backward rule is kept only if some parent
    // requires a gradient.
    Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn, const char* op) {
        bool needs = false;
        if (grad_enabled_) {
            for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
        }
        return push(std::move(value), std::move(parents), needs ? std::move(fn) : nullptr, needs, op);
    }

    void backward(Var loss) {
        if (loss.tape_ != this) throw Error("backward: loss belongs to another tape");
        if (!grad_enabled_) throw Error("backward: tape was created with gradients disabled");
        if (backward_done_) throw Error("backward called twice without reset()");
        const Node& root = nodes_[loss.id_];
        if (root.value.size() != 1) {
            throw ShapeError("backward: loss must be scalar, got shape " + to_string(root.value.shape()));
        }
        backward_done_ = true;
        if (!root.requires_grad) return;
        grad(loss.id_)[0] = 1.0;
        for (std::size_t id = loss.id_ + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.backward && n.grad.size() != 0) n.backward(*this, id);
        }
        for (Node& n : nodes_) {
            if (!n.requires_grad || !n.parents.empty() || n.backward) continue;
            if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
            if (n.param != nullptr) {
                Parameter& p = *n.param;
                if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
                for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
            }
        }
    }

    // Clears node gradients so backward() may run again.
    void reset() {
        for (Node& n : nodes_) n.grad = Tensor();
        backward_done_ = false;
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const char* op_name(std::size_t id) const { return nodes_[id].op; }

    // Gradient buffer for a node, allocated (zeroed) on first touch.
    Tensor& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
        return n.grad;
    }
    const Tensor& grad_view(std::size_t id) const { return nodes_[id].grad; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
        const char* op = "";
    };

    Var push(Tensor v, std::vector<std::size_t> parents, BackwardFn fn, bool needs_grad, const char* op) {
        Node n;
        n.value = std::move(v);
        n.parents = std::move(parents);
        n.backward = std::move(fn);
        n.requires_grad = needs_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, std::size_t> params_;
    bool grad_enabled_;
    bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }
inline const Tensor& Var::grad() const { return tape_->grad_view(id_); }

namespace detail {

inline void same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
    same_tape(a, b, op);
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

struct AxisSplit {
    std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        throw ShapeError(std::string(op) + ": invalid axis " + std::to_string(axis) + " for shape " +
                         to_string(s));
    }
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

inline Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape r;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) r.push_back(s[i]);
    if (r.empty()) r.push_back(1);
    return r;
}

// Elementwise map y = f(x) with dy/dx = df(x, y).
template <class F, class DF>
Var unary(const Var& x, F f, DF df, const char* op) {
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, df](Tape& t, std::size_t self) {
            const Tensor& xv = t.value(xid);
            const Tensor& yv = t.value(self);
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
        },
        op);
}

}  // namespace detail

// Elementwise a + b. b may also be a rank-1 row vector matching a's last axis.
inline Var add(const Var& a, const Var& b) {
    detail::same_tape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t aid = a.id(), bid = b.id();
    if (av.shape() == bv.shape()) {
        Tensor y(av.shape());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
        return a.tape().record(
            std::move(y), {aid, bid},
            [aid, bid](Tape& t, std::size_t self) {
                const Tensor& g = t.grad(self);
                Tensor& ga = t.grad(aid);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                Tensor& gb = t.grad(bid);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            },
            "add");
    }
    if (bv.rank() == 1 && av.rank() >= 1 && av.shape().back() == bv.size()) {
        const std::size_t n = bv.size();
        Tensor y(av.shape());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i % n];
        return a.tape().record(
            std::move(y), {aid, bid},
            [aid, bid, n](Tape& t, std::size_t self) {
                const Tensor& g = t.grad(self);
                Tensor& ga = t.grad(aid);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                Tensor& gb = t.grad(bid);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
            },
            "add_row");
    }
    throw ShapeError("add: shape mismatch " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
}

inline Var sub(const Var& a, const Var& b) {
    detail::same_shape(a, b, "sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    const std::size_t aid = a.id(), bid = b.id();
    return a.tape().record(
        std::move(y), {aid, bid},
        [aid, bid](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& ga = t.grad(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            Tensor& gb = t.grad(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        },
        "sub");
}

inline Var mul(const Var& a, const Var& b) {
    detail::same_shape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    const std::size_t aid = a.id(), bid = b.id();
    return a.tape().record(
        std::move(y), {aid, bid},
        [aid, bid](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            {
                Tensor& ga = t.grad(aid);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            Tensor& gb = t.grad(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        },
        "mul");
}

inline Var scale(const Var& x, double s) {
    return detail::unary(
        x, [s](double v) { return s * v; }, [s](double, double) { return s; }, "scale");
}

inline Var relu(const Var& x) {
    return detail::unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; },
        "relu");
}

inline Var leaky_relu(const Var& x, double slope) {
    return detail::unary(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; }, "leaky_relu");
}

inline Var tanh(const Var& x) {
    return detail::unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var cos(const Var& x) {
    return detail::unary(
        x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); }, "cos");
}

inline Var sin(const Var& x) {
    return detail::unary(
        x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); }, "sin");
}

inline Var sqrt(const Var& x) {
    return detail::unary(
        x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

inline Var exp(const Var& x) {
    return detail::unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

// Adds a constant to every element.
inline Var add_scalar(const Var& x, double c) {
    return detail::unary(
        x, [c](double v) { return v + c; }, [](double, double) { return 1.0; }, "add_scalar");
}

// (m x k) * (k x n)
inline Var matmul(const Var& a, const Var& b) {
    detail::same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " and " +
                         to_string(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor y(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* yr = &y[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* br = &bv[p * n];
            for (std::size_t j = 0; j < n; ++j) yr[j] += aip * br[j];
        }
    }
    const std::size_t aid = a.id(), bid = b.id();
    return a.tape().record(
        std::move(y), {aid, bid},
        [aid, bid, m, k, n](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& av = t.value(aid);
            const Tensor& bv = t.value(bid);
            if (t.requires_grad(aid)) {
                Tensor& ga = t.grad(aid);  // g * b^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* gr = &g[i * n];
                        const double* br = &bv[p * n];
                        for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
                        ga[i * k + p] += s;
                    }
            }
            if (t.requires_grad(bid)) {
                Tensor& gb = t.grad(bid);  // a^T * g
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = av[i * k + p];
                        const double* gr = &g[i * n];
                        double* gbr = &gb[p * n];
                        for (std::size_t j = 0; j < n; ++j) gbr[j] += aip * gr[j];
                    }
            }
        },
        "matmul");
}

// x: (B, Cin, L), w: (Cout, Cin, K) with odd K, bias: (Cout). Stride 1, same padding.
inline Var conv1d(const Var& x, const Var& w, const Var& bias) {
    detail::same_tape(x, w, "conv1d");
    detail::same_tape(x, bias, "conv1d");
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 3 || wv.rank() != 3 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) ||
        bv.size() != wv.dim(0) || wv.dim(2) % 2 == 0) {
        throw ShapeError("conv1d: incompatible shapes x" + to_string(xv.shape()) + " w" +
                         to_string(wv.shape()) + " b" + to_string(bv.shape()));
    }
    const std::size_t B = xv.dim(0), cin = xv.dim(1), L = xv.dim(2);
    const std::size_t cout = wv.dim(0), K = wv.dim(2);
    const long half = static_cast<long>(K / 2);
    Tensor y(Shape{B, cout, L});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            double* yr = &y[(b * cout + o) * L];
            for (std::size_t l = 0; l < L; ++l) yr[l] = bv[o];
            for (std::size_t c = 0; c < cin; ++c) {
                const double* xr = &xv[(b * cin + c) * L];
                for (std::size_t kk = 0; kk < K; ++kk) {
                    const double wk = wv[(o * cin + c) * K + kk];
                    const long shift = static_cast<long>(kk) - half;
                    const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                    const std::size_t hi = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
                    for (std::size_t l = lo; l < hi; ++l) yr[l] += wk * xr[static_cast<long>(l) + shift];
                }
            }
        }
    const std::size_t xid = x.id(), wid = w.id(), bid = bias.id();
    return x.tape().record(
        std::move(y), {xid, wid, bid},
        [=](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& xv = t.value(xid);
            const Tensor& wv = t.value(wid);
            const bool need_x = t.requires_grad(xid);
            const bool need_w = t.requires_grad(wid);
            if (t.requires_grad(bid)) {
                Tensor& gb = t.grad(bid);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double* gr = &g[(b * cout + o) * L];
                        for (std::size_t l = 0; l < L; ++l) gb[o] += gr[l];
                    }
            }
            Tensor* gx = need_x ? &t.grad(xid) : nullptr;
            Tensor* gw = need_w ? &t.grad(wid) : nullptr;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < cout; ++o) {
                    const double* gr = &g[(b * cout + o) * L];
                    for (std::size_t c = 0; c < cin; ++c) {
                        const double* xr = &xv[(b * cin + c) * L];
                        for (std::size_t kk = 0; kk < K; ++kk) {
                            const std::size_t widx = (o * cin + c) * K + kk;
                            const long shift = static_cast<long>(kk) - half;
                            const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                            const std::size_t hi = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
                            if (gw) {
                                double s = 0.0;
                                for (std::size_t l = lo; l < hi; ++l) s += gr[l] * xr[static_cast<long>(l) + shift];
                                (*gw)[widx] += s;
                            }
                            if (gx) {
                                const double wk = wv[widx];
                                double* gxr = &(*gx)[(b * cin + c) * L];
                                for (std::size_t l = lo; l < hi; ++l) gxr[static_cast<long>(l) + shift] += wk * gr[l];
                            }
                        }
                    }
                }
        },
        "conv1d");
}

// x: (B, C, L) -> (B, C, L / k); window k, stride k, trailing remainder dropped.
inline Var maxpool1d(const Var& x, std::size_t k) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || k == 0 || xv.dim(2) < k) {
        throw ShapeError("maxpool1d: invalid input " + to_string(xv.shape()) + " for kernel " + std::to_string(k));
    }
    const std::size_t rows = xv.dim(0) * xv.dim(1), L = xv.dim(2), out = L / k;
    Tensor y(Shape{xv.dim(0), xv.dim(1), out});
    std::vector<std::size_t> argmax(rows * out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j) {
            std::size_t best = r * L + j * k;
            for (std::size_t q = 1; q < k; ++q) {
                const std::size_t idx = r * L + j * k + q;
                if (xv[idx] > xv[best]) best = idx;
            }
            argmax[r * out + j] = best;
            y[r * out + j] = xv[best];
        }
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, argmax = std::move(argmax)](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
        },
        "maxpool1d");
}

// Sum over one axis; the axis is removed from the shape.
inline Var sum(const Var& x, std::size_t axis) {
    const Tensor& xv = x.value();
    const auto s = detail::split_axis(xv.shape(), axis, "sum");
    Tensor y(detail::drop_axis(xv.shape(), axis));
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t in = 0; in < s.inner; ++in) y[o * s.inner + in] += xv[(o * s.n + i) * s.inner + in];
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, s](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t i = 0; i < s.n; ++i)
                    for (std::size_t in = 0; in < s.inner; ++in) gx[(o * s.n + i) * s.inner + in] += g[o * s.inner + in];
        },
        "sum");
}

// x / d elementwise; division (rather than scaling by 1/d) keeps n/n == 1 exact.
inline Var div_scalar(const Var& x, double d) {
    return detail::unary(
        x, [d](double v) { return v / d; }, [d](double, double) { return 1.0 / d; }, "div_scalar");
}

inline Var mean(const Var& x, std::size_t axis) {
    const std::size_t n = detail::split_axis(x.shape(), axis, "mean").n;
    return div_scalar(sum(x, axis), static_cast<double>(n));
}

// Sum of all elements, shape (1).
inline Var sum_all(const Var& x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data()) s += v;
    const std::size_t xid = x.id();
    return x.tape().record(
        Tensor::scalar(s), {xid},
        [xid](Tape& t, std::size_t self) {
            const double g = t.grad(self)[0];
            Tensor& gx = t.grad(xid);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        },
        "sum_all");
}

inline Var mean_all(const Var& x) { return div_scalar(sum_all(x), static_cast<double>(x.size())); }

// Numerically stable softmax along an axis (max subtracted).
inline Var softmax(const Var& x, std::size_t axis) {
    const Tensor& xv = x.value();
    const auto s = detail::split_axis(xv.shape(), axis, "softmax");
    Tensor y(xv.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            const auto at = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, xv[at(i)]);
            double z = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) z += (y[at(i)] = std::exp(xv[at(i)] - mx));
            for (std::size_t i = 0; i < s.n; ++i) y[at(i)] /= z;
        }
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, s](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& y = t.value(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    const auto at = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
                    double dot = 0.0;
                    for (std::size_t i = 0; i < s.n; ++i) dot += g[at(i)] * y[at(i)];
                    for (std::size_t i = 0; i < s.n; ++i) gx[at(i)] += y[at(i)] * (g[at(i)] - dot);
                }
        },
        "softmax");
}

// Normalizes along `axis` then applies per-feature gain and bias (length n).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, std::size_t axis, double eps = 1e-5) {
    detail::same_tape(x, gamma, "layer_norm");
    detail::same_tape(x, beta, "layer_norm");
    const Tensor& xv = x.value();
    const auto s = detail::split_axis(xv.shape(), axis, "layer_norm");
    if (gamma.size() != s.n || beta.size() != s.n) {
        throw ShapeError("layer_norm: gain/bias shapes " + to_string(gamma.shape()) + ", " +
                         to_string(beta.shape()) + " do not match axis length " + std::to_string(s.n));
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor y(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            const auto at = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
            double mu = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) mu += xv[at(i)];
            mu /= static_cast<double>(s.n);
            double var = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) var += (xv[at(i)] - mu) * (xv[at(i)] - mu);
            var /= static_cast<double>(s.n);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * s.inner + in] = is;
            for (std::size_t i = 0; i < s.n; ++i) {
                xhat[at(i)] = (xv[at(i)] - mu) * is;
                y[at(i)] = xhat[at(i)] * gv[i] + bv[i];
            }
        }
    const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
    return x.tape().record(
        std::move(y), {xid, gid, bid},
        [xid, gid, bid, s, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& gv = t.value(gid);
            const double n = static_cast<double>(s.n);
            const bool need_x = t.requires_grad(xid);
            Tensor* gg = t.requires_grad(gid) ? &t.grad(gid) : nullptr;
            Tensor* gb = t.requires_grad(bid) ? &t.grad(bid) : nullptr;
            Tensor* gx = need_x ? &t.grad(xid) : nullptr;
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    const auto at = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t i = 0; i < s.n; ++i) {
                        const double gi = g[at(i)];
                        if (gg) (*gg)[i] += gi * xhat[at(i)];
                        if (gb) (*gb)[i] += gi;
                        const double d = gi * gv[i];
                        sum_d += d;
                        sum_dx += d * xhat[at(i)];
                    }
                    if (!gx) continue;
                    const double is = inv_std[o * s.inner + in];
                    for (std::size_t i = 0; i < s.n; ++i) {
                        const double d = g[at(i)] * gv[i];
                        (*gx)[at(i)] += is / n * (n * d - sum_d - xhat[at(i)] * sum_dx);
                    }
                }
        },
        "layer_norm");
}

inline Var reshape(const Var& x, Shape shape) {
    Tensor y = x.value().reshaped(std::move(shape));
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        },
        "reshape");
}

// 2-D transpose.
inline Var transpose(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + to_string(xv.shape()));
    const std::size_t r = xv.dim(0), c = xv.dim(1);
    Tensor y(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, r, c](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
        },
        "transpose");
}

// Concatenates along `axis`; all other dimensions must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    const auto s0 = detail::split_axis(first, axis, "concat");
    std::vector<std::size_t> lens;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const Var& p : parts) {
        detail::same_tape(parts[0], p, "concat");
        const Shape& sh = p.shape();
        bool ok = sh.size() == first.size();
        for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == first[i];
        if (!ok) throw ShapeError("concat: shape " + to_string(sh) + " incompatible with " + to_string(first));
        lens.push_back(sh[axis]);
        ids.push_back(p.id());
        total += sh[axis];
    }
    Shape out = first;
    out[axis] = total;
    Tensor y(out);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        for (std::size_t o = 0; o < s0.outer; ++o)
            for (std::size_t i = 0; i < lens[k]; ++i)
                for (std::size_t in = 0; in < s0.inner; ++in)
                    y[(o * total + off + i) * s0.inner + in] = pv[(o * lens[k] + i) * s0.inner + in];
        off += lens[k];
    }
    const auto outer = s0.outer, inner = s0.inner;
    return parts[0].tape().record(
        std::move(y), ids,
        [ids, lens, outer, inner, total](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            std::size_t off = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.requires_grad(ids[k])) {
                    Tensor& gp = t.grad(ids[k]);
                    for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < lens[k]; ++i)
                            for (std::size_t in = 0; in < inner; ++in)
                                gp[(o * lens[k] + i) * inner + in] += g[(o * total + off + i) * inner + in];
                }
                off += lens[k];
            }
        },
        "concat");
}

// Elements [start, start + len) along `axis`.
inline Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t len) {
    const Tensor& xv = x.value();
    const auto s = detail::split_axis(xv.shape(), axis, "slice");
    if (start + len > s.n || len == 0) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for shape " + to_string(xv.shape()));
    }
    Shape out = xv.shape();
    out[axis] = len;
    Tensor y(out);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t in = 0; in < s.inner; ++in)
                y[(o * len + i) * s.inner + in] = xv[(o * s.n + start + i) * s.inner + in];
    const std::size_t xid = x.id();
    return x.tape().record(
        std::move(y), {xid},
        [xid, s, start, len](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            Tensor& gx = t.grad(xid);
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t i = 0; i < len; ++i)
                    for (std::size_t in = 0; in < s.inner; ++in)
                        gx[(o * s.n + start + i) * s.inner + in] += g[(o * len + i) * s.inner + in];
        },
        "slice");
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& x) { return scale(x, s); }

}  // namespace phasenet::ad
