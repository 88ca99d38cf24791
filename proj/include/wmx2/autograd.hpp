#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wmx2/ops.hpp"
#include "wmx2/wavelet.hpp"

// Recorded-tape reverse-mode differentiation over whole-tensor ops. Each op
// produces a node holding its output value; when any input requires a
// gradient the node also stores a backward closure over the saved state it
// needs. backward() walks the graph once in reverse topological order.

namespace wmx2 {

namespace detail {

template <typename T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void()> backward_fn;  // empty on leaves / untracked nodes

    void accumulate(const TensorT<T>& delta) {
        if (!requires_grad) return;
        if (grad.empty()) grad = TensorT<T>(value.shape());
        for (int64_t i = 0; i < delta.size(); ++i) grad[i] += delta[i];
    }
};

}  // namespace detail

template <typename T>
class Var {
public:
    using Node = detail::NodeT<T>;

    Var() = default;

    static Var leaf(TensorT<T> value, bool requires_grad) {
        Var v;
        v.node_ = std::make_shared<Node>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = requires_grad;
        return v;
    }

    static Var constant(TensorT<T> value) { return leaf(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const TensorT<T>& value() const { return node_->value; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Gradient accumulated by the last backward(); zeros if none reached this
    // node.
    TensorT<T> grad() const {
        if (!node_->grad.empty()) return node_->grad;
        return TensorT<T>(node_->value.shape());
    }

    void clear_grad() { node_->grad = TensorT<T>(); }

    std::shared_ptr<Node> node() const { return node_; }

    // Internal: builds an op result node. parents own the graph upstream.
    static Var make_result(TensorT<T> value, std::vector<std::shared_ptr<Node>> parents,
                           std::function<void()> backward_fn) {
        Var v;
        v.node_ = std::make_shared<Node>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = true;
        v.node_->parents = std::move(parents);
        v.node_->backward_fn = std::move(backward_fn);
        return v;
    }

private:
    std::shared_ptr<Node> node_;
};

template <typename T>
inline bool any_requires_grad(std::initializer_list<const Var<T>*> vars) {
    for (const Var<T>* v : vars) {
        if (v->defined() && v->requires_grad()) return true;
    }
    return false;
}

// Propagates seed_grad from root back to every reachable tracked node.
template <typename T>
void backward(const Var<T>& root, const TensorT<T>& seed_grad) {
    using Node = detail::NodeT<T>;
    if (!root.requires_grad()) {
        throw UnsupportedOpError("backward: root does not track gradients");
    }
    if (!(seed_grad.shape() == root.value().shape())) {
        throw ShapeError("backward: seed gradient shape " + seed_grad.shape().str() +
                         " does not match value shape " + root.value().shape().str());
    }
    // Iterative DFS for topological order (children after parents).
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->accumulate(seed_grad);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn();
        }
    }
}

// Scalar convenience: root must be a (1,1,1,1) value.
template <typename T>
void backward(const Var<T>& root) {
    if (root.value().size() != 1) {
        throw ShapeError("backward: implicit seed requires a scalar value, got " +
                         root.value().shape().str());
    }
    backward(root, TensorT<T>::full(1, 1, 1, 1, T(1)));
}

// ---- op wrappers -----------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
    TensorT<T> out = conv2d(x.value(), weight.value(), bias.value(), stride, padding);
    if (!any_requires_grad<T>({&x, &weight, &bias})) {
        return Var<T>::constant(std::move(out));
    }
    auto xn = x.node(), wn = weight.node(), bn = bias.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn, wn, bn}, nullptr);
    auto on = out_var.node().get();
    const Shape x_shape = x.value().shape();
    const Shape w_shape = weight.value().shape();
    out_var.node()->backward_fn = [on, xn, wn, bn, x_shape, w_shape, stride, padding]() {
        const TensorT<T>& g = on->grad;
        if (xn->requires_grad) {
            xn->accumulate(conv2d_backward_input(g, wn->value, x_shape, stride, padding));
        }
        if (wn->requires_grad || bn->requires_grad) {
            TensorT<T> dw, db;
            conv2d_backward_params(g, xn->value, w_shape, stride, padding, dw, db);
            wn->accumulate(dw);
            bn->accumulate(db);
        }
    };
    return out_var;
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
    TensorT<T> out = gelu(x.value());
    if (!x.requires_grad()) return Var<T>::constant(std::move(out));
    auto xn = x.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, xn]() {
        const TensorT<T>& g = on->grad;
        TensorT<T> dx(xn->value.shape());
        for (int64_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * gelu_grad_scalar(xn->value[i]);
        xn->accumulate(dx);
    };
    return out_var;
}

// Batch norm over a Var input with trainable gamma/beta. running_mean and
// running_var reference caller-owned state and are updated in training mode.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  TensorT<T>& running_mean, TensorT<T>& running_var, T epsilon, T momentum,
                  bool training) {
    const int c = x.value().c();
    if (gamma.value().size() != c || beta.value().size() != c) {
        throw ShapeError("batch_norm: param size does not match " + std::to_string(c) + " channels");
    }
    const int64_t plane = static_cast<int64_t>(x.value().h()) * x.value().w();
    const int64_t cnt = static_cast<int64_t>(x.value().n()) * plane;

    TensorT<T> xhat(x.value().shape());
    std::vector<double> inv_std(static_cast<size_t>(c));
    if (training) {
        std::vector<double> mean, var;
        channel_mean_var(x.value(), mean, var);
        for (int ic = 0; ic < c; ++ic) {
            inv_std[static_cast<size_t>(ic)] = 1.0 / std::sqrt(var[static_cast<size_t>(ic)] + static_cast<double>(epsilon));
            for (int in = 0; in < x.value().n(); ++in) {
                const T* src = x.value().row(in, ic, 0);
                T* dst = xhat.row(in, ic, 0);
                for (int64_t i = 0; i < plane; ++i) {
                    dst[i] = static_cast<T>((src[i] - mean[static_cast<size_t>(ic)]) * inv_std[static_cast<size_t>(ic)]);
                }
            }
            const double v_running = cnt > 1 ? var[static_cast<size_t>(ic)] * static_cast<double>(cnt) / (cnt - 1)
                                             : var[static_cast<size_t>(ic)];
            running_mean[ic] = static_cast<T>((1.0 - momentum) * running_mean[ic] + momentum * mean[static_cast<size_t>(ic)]);
            running_var[ic] = static_cast<T>((1.0 - momentum) * running_var[ic] + momentum * v_running);
        }
    } else {
        for (int ic = 0; ic < c; ++ic) {
            inv_std[static_cast<size_t>(ic)] = 1.0 / std::sqrt(static_cast<double>(running_var[ic]) + static_cast<double>(epsilon));
            const double m = running_mean[ic];
            for (int in = 0; in < x.value().n(); ++in) {
                const T* src = x.value().row(in, ic, 0);
                T* dst = xhat.row(in, ic, 0);
                for (int64_t i = 0; i < plane; ++i) {
                    dst[i] = static_cast<T>((src[i] - m) * inv_std[static_cast<size_t>(ic)]);
                }
            }
        }
    }
    TensorT<T> out(x.value().shape());
    for (int ic = 0; ic < c; ++ic) {
        const T g = gamma.value()[ic], b = beta.value()[ic];
        for (int in = 0; in < x.value().n(); ++in) {
            const T* src = xhat.row(in, ic, 0);
            T* dst = out.row(in, ic, 0);
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * g + b;
        }
    }

    if (!any_requires_grad<T>({&x, &gamma, &beta})) {
        return Var<T>::constant(std::move(out));
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn, gn, bn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std),
                                   training, c, plane, cnt]() {
        const TensorT<T>& g = on->grad;
        TensorT<T> dgamma(1, c, 1, 1), dbeta(1, c, 1, 1);
        if (gn->requires_grad || bn->requires_grad || xn->requires_grad) {
            for (int ic = 0; ic < c; ++ic) {
                double sg = 0.0, sgx = 0.0;
                for (int in = 0; in < g.n(); ++in) {
                    const T* grow = g.row(in, ic, 0);
                    const T* xrow = xhat.row(in, ic, 0);
                    for (int64_t i = 0; i < plane; ++i) {
                        sg += grow[i];
                        sgx += static_cast<double>(grow[i]) * xrow[i];
                    }
                }
                dbeta[ic] = static_cast<T>(sg);
                dgamma[ic] = static_cast<T>(sgx);
            }
        }
        if (xn->requires_grad) {
            TensorT<T> dx(xn->value.shape());
            for (int ic = 0; ic < c; ++ic) {
                const double gam = gn->value[ic];
                const double scale = gam * inv_std[static_cast<size_t>(ic)];
                if (training) {
                    // dx = gamma/std * (g - mean(g) - xhat * mean(g*xhat))
                    const double mg = static_cast<double>(dbeta[ic]) / static_cast<double>(cnt);
                    const double mgx = static_cast<double>(dgamma[ic]) / static_cast<double>(cnt);
                    for (int in = 0; in < g.n(); ++in) {
                        const T* grow = g.row(in, ic, 0);
                        const T* xrow = xhat.row(in, ic, 0);
                        T* drow = dx.row(in, ic, 0);
                        for (int64_t i = 0; i < plane; ++i) {
                            drow[i] = static_cast<T>(scale * (grow[i] - mg - xrow[i] * mgx));
                        }
                    }
                } else {
                    for (int in = 0; in < g.n(); ++in) {
                        const T* grow = g.row(in, ic, 0);
                        T* drow = dx.row(in, ic, 0);
                        for (int64_t i = 0; i < plane; ++i) drow[i] = static_cast<T>(scale * grow[i]);
                    }
                }
            }
            xn->accumulate(dx);
        }
        gn->accumulate(dgamma);
        bn->accumulate(dbeta);
    };
    return out_var;
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool training, Rng& rng) {
    if (!training || rate == 0.0) {
        if (rate < 0.0 || rate >= 1.0) {
            throw ParamError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
        }
        return x;
    }
    if (!x.requires_grad()) {
        return Var<T>::constant(dropout(x.value(), rate, training, rng));
    }
    TensorT<T> mask;
    TensorT<T> out = dropout(x.value(), rate, training, rng, &mask);
    auto xn = x.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, xn, mask = std::move(mask)]() {
        const TensorT<T>& g = on->grad;
        TensorT<T> dx(xn->value.shape());
        for (int64_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * mask[i];
        xn->accumulate(dx);
    };
    return out_var;
}

// Resize participates only as a constant preprocessing step; gradients are
// not defined through it.
template <typename T>
Var<T> resize(const Var<T>& x, int out_h, int out_w, ResizeMode mode) {
    if (x.requires_grad()) {
        throw UnsupportedOpError("resize: gradient through resize is unsupported");
    }
    return Var<T>::constant(resize(x.value(), out_h, out_w, mode));
}

template <typename T>
Var<T> add(const Var<T>& x, const Var<T>& y) {
    TensorT<T> out = add(x.value(), y.value());
    if (!any_requires_grad<T>({&x, &y})) return Var<T>::constant(std::move(out));
    auto xn = x.node(), yn = y.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn, yn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, xn, yn]() {
        xn->accumulate(on->grad);
        yn->accumulate(on->grad);
    };
    return out_var;
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ParamError("concat_channels: empty input list");
    std::vector<TensorT<T>> vals;
    vals.reserve(xs.size());
    bool track = false;
    for (const auto& v : xs) {
        vals.push_back(v.value());
        track = track || v.requires_grad();
    }
    TensorT<T> out = concat_channels(vals);
    if (!track) return Var<T>::constant(std::move(out));
    std::vector<std::shared_ptr<detail::NodeT<T>>> parents;
    parents.reserve(xs.size());
    for (const auto& v : xs) parents.push_back(v.node());
    auto out_var = Var<T>::make_result(std::move(out), parents, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, parents]() {
        int c0 = 0;
        for (const auto& p : parents) {
            const int pc = p->value.c();
            if (p->requires_grad) {
                p->accumulate(slice_channels(on->grad, c0, pc));
            }
            c0 += pc;
        }
    };
    return out_var;
}

// Linear orthonormal / permutation ops: backward is the named adjoint.
template <typename T, typename Fwd, typename Adj>
Var<T> linear_unary_op(const Var<T>& x, Fwd&& fwd, Adj&& adj) {
    TensorT<T> out = fwd(x.value());
    if (!x.requires_grad()) return Var<T>::constant(std::move(out));
    auto xn = x.node();
    auto out_var = Var<T>::make_result(std::move(out), {xn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, xn, adj]() { xn->accumulate(adj(on->grad)); };
    return out_var;
}

template <typename T>
Var<T> dwt2_haar(const Var<T>& x) {
    return linear_unary_op(
        x, [](const TensorT<T>& v) { return dwt2_haar(v); },
        [](const TensorT<T>& g) { return idwt2_haar(g); });
}

template <typename T>
Var<T> idwt2_haar(const Var<T>& x) {
    return linear_unary_op(
        x, [](const TensorT<T>& v) { return idwt2_haar(v); },
        [](const TensorT<T>& g) { return dwt2_haar(g); });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
    return linear_unary_op(
        x, [r](const TensorT<T>& v) { return pixel_shuffle(v, r); },
        [r](const TensorT<T>& g) { return pixel_unshuffle(g, r); });
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r) {
    return linear_unary_op(
        x, [r](const TensorT<T>& v) { return pixel_unshuffle(v, r); },
        [r](const TensorT<T>& g) { return pixel_shuffle(g, r); });
}

template <typename T>
Var<T> reflect_pad_to_even(const Var<T>& x) {
    const Shape in_shape = x.value().shape();
    return linear_unary_op(
        x, [](const TensorT<T>& v) { return reflect_pad_to_even(v); },
        [in_shape](const TensorT<T>& g) { return reflect_pad_to_even_adjoint(g, in_shape); });
}

template <typename T>
Var<T> crop_top_left(const Var<T>& x, int h, int w) {
    const Shape in_shape = x.value().shape();
    return linear_unary_op(
        x, [h, w](const TensorT<T>& v) { return crop_top_left(v, h, w); },
        [in_shape](const TensorT<T>& g) { return crop_top_left_adjoint(g, in_shape); });
}

// Mean Huber loss against a fixed target; returns a (1,1,1,1) value.
template <typename T>
Var<T> huber_loss(const Var<T>& pred, const TensorT<T>& target, T delta) {
    if (!pred.value().same_shape(target)) {
        throw ShapeError("huber_loss: shape mismatch " + pred.value().shape().str() + " vs " +
                         target.shape().str());
    }
    if (!(delta > T(0))) throw ParamError("huber_loss: delta must be > 0");
    const TensorT<T>& p = pred.value();
    double acc = 0.0;
    for (int64_t i = 0; i < p.size(); ++i) {
        const double r = static_cast<double>(p[i]) - target[i];
        const double a = std::abs(r);
        acc += a <= static_cast<double>(delta) ? 0.5 * r * r
                                               : static_cast<double>(delta) * (a - 0.5 * delta);
    }
    TensorT<T> out = TensorT<T>::full(1, 1, 1, 1, static_cast<T>(acc / static_cast<double>(p.size())));
    if (!pred.requires_grad()) return Var<T>::constant(std::move(out));
    auto pn = pred.node();
    auto out_var = Var<T>::make_result(std::move(out), {pn}, nullptr);
    auto on = out_var.node().get();
    out_var.node()->backward_fn = [on, pn, target, delta]() {
        const T g0 = on->grad[0];
        const T inv_n = static_cast<T>(1.0 / static_cast<double>(target.size()));
        TensorT<T> dp(pn->value.shape());
        for (int64_t i = 0; i < dp.size(); ++i) {
            const T r = pn->value[i] - target[i];
            T h = r;
            if (r > delta) h = delta;
            if (r < -delta) h = -delta;
            dp[i] = g0 * h * inv_n;
        }
        pn->accumulate(dp);
    };
    return out_var;
}

}  // namespace wmx2
