#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

// Define-by-run reverse-mode automatic differentiation. Evaluating an
// expression of Vars records the graph; backward() walks it in reverse
// topological order. Gradients are recomputed from scratch on every
// backward pass (no cross-pass accumulation).
//
// A graph is single-owner during forward/backward. Distinct graphs may be
// built and differentiated on distinct threads; with gradients disabled no
// node is ever mutated, so parameters are read-shareable.

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

// RAII switch that disables graph recording on the current thread.
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    // Leaf holding a constant; never receives gradient.
    static Var constant(Tensor value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    // Trainable leaf; gradient tensor starts at exact zero.
    static Var parameter(Tensor value) {
        auto n = std::make_shared<Node>();
        n->grad = Tensor::zeros(value.shape());
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    double scalar() const { return node_->value[0]; }

    void zero_grad() { node_->grad = Tensor::zeros(node_->value.shape()); }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline void accum_grad(Node& n, const Tensor& g) {
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

// Builds a result node. Only wires up edges and the backward closure when
// grad mode is on and some input needs gradient.
inline Var make_result(Tensor value, std::vector<Var> inputs,
                       std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    if (grad_mode()) {
        for (const Var& v : inputs)
            if (v.requires_grad()) needs = true;
    }
    if (needs) {
        n->requires_grad = true;
        for (const Var& v : inputs) n->inputs.push_back(v.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

} // namespace detail

// Populates gradients of every parameter reachable from `root`, overwriting
// whatever a previous backward pass left there. `root` must be scalar.
inline void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1) {
        throw ShapeError("backward: output must be a scalar");
    }
    if (!root.requires_grad()) return;

    // Iterative DFS postorder: inputs before consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node* child = n->inputs[next++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->grad = Tensor::zeros(n->value.shape());
    root.node()->grad = Tensor::ones(root.value().shape());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// ---------------------------------------------------------------------------
// Differentiable operations

inline Var add(const Var& a, const Var& b) {
    Tensor out = add(a.value(), b.value());
    return detail::make_result(std::move(out), {a, b}, [a, b](Node& self) {
        detail::accum_grad(*a.node(), reduce_to(self.grad, a.shape()));
        detail::accum_grad(*b.node(), reduce_to(self.grad, b.shape()));
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tensor out = sub(a.value(), b.value());
    return detail::make_result(std::move(out), {a, b}, [a, b](Node& self) {
        detail::accum_grad(*a.node(), reduce_to(self.grad, a.shape()));
        detail::accum_grad(*b.node(), reduce_to(scale(self.grad, -1.0), b.shape()));
    });
}

inline Var mul(const Var& a, const Var& b) {
    Tensor out = mul(a.value(), b.value());
    return detail::make_result(std::move(out), {a, b}, [a, b](Node& self) {
        detail::accum_grad(*a.node(), reduce_to(mul(self.grad, b.value()), a.shape()));
        detail::accum_grad(*b.node(), reduce_to(mul(self.grad, a.value()), b.shape()));
    });
}

inline Var div(const Var& a, const Var& b) {
    Tensor out = div(a.value(), b.value());
    return detail::make_result(std::move(out), {a, b}, [a, b](Node& self) {
        detail::accum_grad(*a.node(), reduce_to(div(self.grad, b.value()), a.shape()));
        Tensor gb = mul(self.grad, div(a.value(), mul(b.value(), b.value())));
        detail::accum_grad(*b.node(), reduce_to(scale(gb, -1.0), b.shape()));
    });
}

inline Var scale(const Var& a, double s) {
    return detail::make_result(scale(a.value(), s), {a}, [a, s](Node& self) {
        detail::accum_grad(*a.node(), scale(self.grad, s));
    });
}

inline Var add_scalar(const Var& a, double s) {
    return detail::make_result(add_scalar(a.value(), s), {a}, [a](Node& self) {
        detail::accum_grad(*a.node(), self.grad);
    });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

inline Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul(a.value(), b.value());
    return detail::make_result(std::move(out), {a, b}, [a, b](Node& self) {
        detail::accum_grad(*a.node(), matmul(self.grad, transpose2d(b.value())));
        detail::accum_grad(*b.node(), matmul(transpose2d(a.value()), self.grad));
    });
}

inline Var conv2d(const Var& x, const Var& w, std::size_t stride = 1, std::size_t padding = 0) {
    Tensor out = conv2d(x.value(), w.value(), stride, padding);
    return detail::make_result(std::move(out), {x, w}, [x, w, stride, padding](Node& self) {
        detail::accum_grad(*x.node(),
                           conv2d_grad_input(self.grad, w.value(), x.shape(), stride, padding));
        detail::accum_grad(*w.node(),
                           conv2d_grad_weight(self.grad, x.value(), w.shape(), stride, padding));
    });
}

template <class FwdF, class DerivF>
Var elementwise(const Var& a, FwdF f, DerivF df, const char* name) {
    Tensor out = unary_op(a.value(), f, name);
    return detail::make_result(std::move(out), {a}, [a, df](Node& self) {
        Tensor g(a.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * df(a.value()[i]);
        detail::accum_grad(*a.node(), g);
    });
}

inline double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var relu(const Var& a) {
    return elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var silu(const Var& a) {
    return elementwise(
        a, [](double x) { return x * sigmoid_scalar(x); },
        [](double x) {
            const double s = sigmoid_scalar(x);
            return s * (1.0 + x * (1.0 - s));
        },
        "silu");
}

// Standard published SELU constants.
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluLambda = 1.0507009873554805;

inline Var selu(const Var& a) {
    return elementwise(
        a,
        [](double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0); },
        [](double x) { return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x); },
        "selu");
}

inline Var sigmoid(const Var& a) {
    return elementwise(
        a, [](double x) { return sigmoid_scalar(x); },
        [](double x) {
            const double s = sigmoid_scalar(x);
            return s * (1.0 - s);
        },
        "sigmoid");
}

// Numerically stable log(1 + exp(x)); derivative is sigmoid(x).
inline Var softplus(const Var& a) {
    return elementwise(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x) { return sigmoid_scalar(x); }, "softplus");
}

// log with a numerical floor; below the floor the subgradient is 0.
inline Var log_floor(const Var& a, double floor) {
    return elementwise(
        a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x) { return x > floor ? 1.0 / x : 0.0; }, "log_floor");
}

inline Var sqrt(const Var& a) {
    return elementwise(
        a, [](double x) { return std::sqrt(x); },
        [](double x) { return 0.5 / std::sqrt(x); }, "sqrt");
}

inline Var clamp_min(const Var& a, double lo) {
    return elementwise(
        a, [lo](double x) { return std::max(x, lo); },
        [lo](double x) { return x > lo ? 1.0 : 0.0; }, "clamp_min");
}

inline Var softmax(const Var& a, std::size_t axis) {
    Tensor out = softmax(a.value(), axis);
    return detail::make_result(out, {a}, [a, out, axis](Node& self) {
        // dx = p * (g - sum(g * p, axis))
        Tensor gp = mul(self.grad, out);
        Tensor dot = reduce_sum(gp, {axis}, true);
        detail::accum_grad(*a.node(), mul(out, sub(self.grad, dot)));
    });
}

inline Var reduce_sum(const Var& a, const std::vector<std::size_t>& axes, bool keepdims = true) {
    Tensor out = reduce_sum(a.value(), axes, keepdims);
    Shape keep_shape = a.shape();
    for (std::size_t ax : axes) keep_shape.at(ax) = 1;
    return detail::make_result(std::move(out), {a}, [a, keep_shape](Node& self) {
        Tensor g = reshape(self.grad, keep_shape);
        detail::accum_grad(*a.node(), broadcast_to(g, a.shape()));
    });
}

inline Var reduce_mean(const Var& a, const std::vector<std::size_t>& axes, bool keepdims = true) {
    std::size_t count = 1;
    for (std::size_t ax : axes) count *= a.shape().at(ax);
    return scale(reduce_sum(a, axes, keepdims), 1.0 / static_cast<double>(count));
}

inline Var mean_all(const Var& a) {
    std::vector<std::size_t> axes(a.shape().size());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return reduce_mean(a, axes, false);
}

inline Var reshape(const Var& a, Shape shape) {
    Tensor out = reshape(a.value(), shape);
    return detail::make_result(std::move(out), {a}, [a](Node& self) {
        detail::accum_grad(*a.node(), reshape(self.grad, a.shape()));
    });
}

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (const Var& p : parts) values.push_back(p.value());
    Tensor out = concat(values, axis);
    return detail::make_result(std::move(out), parts, [parts, axis](Node& self) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            const std::size_t len = p.shape()[axis];
            detail::accum_grad(*p.node(), slice(self.grad, axis, off, len));
            off += len;
        }
    });
}

inline Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
    Tensor out = slice(a.value(), axis, start, len);
    return detail::make_result(std::move(out), {a}, [a, axis, start](Node& self) {
        Tensor g = Tensor::zeros(a.shape());
        slice_add_back(g, self.grad, axis, start);
        detail::accum_grad(*a.node(), g);
    });
}

inline Var avg_pool(const Var& a, std::size_t k, std::size_t stride) {
    Tensor out = pool2d(a.value(), k, stride, PoolKind::avg);
    return detail::make_result(std::move(out), {a}, [a, k, stride](Node& self) {
        detail::accum_grad(*a.node(),
                           pool2d_backward(self.grad, a.value(), k, stride, PoolKind::avg));
    });
}

inline Var max_pool(const Var& a, std::size_t k, std::size_t stride) {
    Tensor out = pool2d(a.value(), k, stride, PoolKind::max);
    return detail::make_result(std::move(out), {a}, [a, k, stride](Node& self) {
        detail::accum_grad(*a.node(),
                           pool2d_backward(self.grad, a.value(), k, stride, PoolKind::max));
    });
}

// B x C x H x W -> B x C mean over the spatial extent.
inline Var global_avg_pool(const Var& a) {
    ensure_rank(a.value(), 4, "global_avg_pool");
    Var pooled = reduce_mean(a, {2, 3}, true);
    return reshape(pooled, Shape{a.shape()[0], a.shape()[1]});
}

// ---------------------------------------------------------------------------
// Finite-difference verification oracle

// Central-difference check of d(loss)/d(params) against autodiff. Returns the
// worst relative error, denominator max(|analytic|, |numeric|, 1e-8).
// `loss_fn` must be a deterministic pure function of the parameter values.
inline double grad_check(const std::function<Var()>& loss_fn, const std::vector<Var>& params,
                         double epsilon = 1e-5) {
    if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
        throw ConfigError("grad_check: epsilon must be in (0, 1e-2]");
    }
    Var loss = loss_fn();
    backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Var& p : params) {
        analytic.push_back(p.grad().size() ? p.grad() : Tensor::zeros(p.shape()));
    }

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& theta = const_cast<Var&>(params[pi]).mutable_value();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            double fp, fm;
            {
                NoGradGuard ng;
                theta[i] = saved + epsilon;
                fp = loss_fn().scalar();
                theta[i] = saved - epsilon;
                fm = loss_fn().scalar();
            }
            theta[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: non-finite loss at perturbed point");
            }
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

} // namespace bridgelab
