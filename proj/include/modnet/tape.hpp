#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "modnet/common.hpp"
#include "modnet/tensor.hpp"

namespace modnet {

template <typename T>
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation record. Nodes are appended during the forward
// pass in topological order (an op's inputs always exist before the op), and
// backward() walks the list in reverse accumulating adjoints.
//
// Single-owner: one Tape per forward/backward pass, not shareable.
template <typename T>
class Tape {
public:
    using BackpropFn = std::function<void(Tape&, int)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // empty until touched during backward
        bool needs_grad = false;
        BackpropFn backprop;  // null for leaves
    };

    Var<T> leaf(Tensor<T> value, bool needs_grad) {
        value.check_finite(scope_.empty() ? "leaf" : scope_);
        nodes_.push_back(Node{std::move(value), {}, needs_grad, nullptr});
        return Var<T>{static_cast<int>(nodes_.size()) - 1};
    }

    // Appends an op result. needs_grad is inherited from the inputs; the
    // backprop closure is dropped when no input wants gradients so that
    // inference-only passes skip all bookkeeping.
    Var<T> push(Tensor<T> value, const std::vector<Var<T>>& inputs, BackpropFn backprop) {
        value.check_finite(scope_.empty() ? "op output" : scope_);
        bool needs = false;
        for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
        nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backprop) : nullptr});
        return Var<T>{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }

    bool has_grad(Var<T> v) const { return !nodes_[v.id].grad.empty(); }

    // Adjoint of a node after backward(); empty tensor if unreachable from the loss.
    const Tensor<T>& grad(Var<T> v) const { return nodes_[v.id].grad; }

    // Accumulation buffer used by backprop closures; allocates zeros on first use.
    Tensor<T>& grad_acc(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    void backward(Var<T> loss) {
        if (backward_done_)
            throw StateError("backward() called twice on the same tape");
        if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size()))
            throw StateError("backward() on invalid loss node");
        if (nodes_[loss.id].value.size() != 1)
            throw ShapeError("backward() requires a scalar loss, got shape " +
                             shape_str(nodes_[loss.id].value.shape()));
        backward_done_ = true;
        grad_acc(loss.id)[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.grad.empty() && n.backprop) n.backprop(*this, i);
        }
    }

    bool backward_done() const { return backward_done_; }

    std::size_t node_count() const { return nodes_.size(); }

    // Diagnostic label attached to NumericError messages (e.g. current layer name).
    void set_scope(std::string s) { scope_ = std::move(s); }
    const std::string& scope() const { return scope_; }

private:
    std::vector<Node> nodes_;
    std::string scope_;
    bool backward_done_ = false;
};

// ---- elementwise / reduction ops -------------------------------------------

template <typename T>
inline void axpy(std::size_t n, T a, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b) {
    const auto& va = tape.value(a);
    const auto& vb = tape.value(b);
    if (!va.same_shape(vb))
        throw ShapeError("add: shape mismatch " + shape_str(va.shape()) + " vs " +
                         shape_str(vb.shape()));
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    int ia = a.id, ib = b.id;
    return tape.push(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        if (t.needs_grad(ia)) axpy(g.size(), T(1), g.data(), t.grad_acc(ia).data());
        if (t.needs_grad(ib)) axpy(g.size(), T(1), g.data(), t.grad_acc(ib).data());
    });
}

template <typename T>
Var<T> scale(Tape<T>& tape, Var<T> a, T c) {
    const auto& va = tape.value(a);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * va[i];
    int ia = a.id;
    return tape.push(std::move(out), {a}, [ia, c](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        if (t.needs_grad(ia)) axpy(g.size(), c, g.data(), t.grad_acc(ia).data());
    });
}

template <typename T>
Var<T> mul(Tape<T>& tape, Var<T> a, Var<T> b) {
    const auto& va = tape.value(a);
    const auto& vb = tape.value(b);
    if (!va.same_shape(vb))
        throw ShapeError("mul: shape mismatch " + shape_str(va.shape()) + " vs " +
                         shape_str(vb.shape()));
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    int ia = a.id, ib = b.id;
    return tape.push(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& xa = t.value(Var<T>{ia});
        const Tensor<T>& xb = t.value(Var<T>{ib});
        if (t.needs_grad(ia)) {
            Tensor<T>& ga = t.grad_acc(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
        }
        if (t.needs_grad(ib)) {
            Tensor<T>& gb = t.grad_acc(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
        }
    });
}

template <typename T>
Var<T> sum(Tape<T>& tape, Var<T> a) {
    const auto& va = tape.value(a);
    T s = T(0);
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    int ia = a.id;
    return tape.push(Tensor<T>::scalar(s), {a}, [ia](Tape<T>& t, int self) {
        T g = t.grad(Var<T>{self})[0];
        if (!t.needs_grad(ia)) return;
        Tensor<T>& ga = t.grad_acc(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

template <typename T>
Var<T> mean(Tape<T>& tape, Var<T> a) {
    const auto& va = tape.value(a);
    T s = T(0);
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    T inv = T(1) / static_cast<T>(va.size());
    int ia = a.id;
    return tape.push(Tensor<T>::scalar(s * inv), {a}, [ia, inv](Tape<T>& t, int self) {
        T g = t.grad(Var<T>{self})[0] * inv;
        if (!t.needs_grad(ia)) return;
        Tensor<T>& ga = t.grad_acc(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

template <typename T>
Var<T> relu(Tape<T>& tape, Var<T> a) {
    const auto& va = tape.value(a);
    Tensor<T> out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > T(0) ? va[i] : T(0);
    int ia = a.id;
    return tape.push(std::move(out), {a}, [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        const Tensor<T>& x = t.value(Var<T>{ia});
        Tensor<T>& ga = t.grad_acc(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > T(0)) ga[i] += g[i];
    });
}

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> a, Shape shape) {
    const auto& va = tape.value(a);
    if (shape_numel(shape) != va.size())
        throw ShapeError("reshape: cannot view " + shape_str(va.shape()) + " as " +
                         shape_str(shape));
    Tensor<T> out(std::move(shape));
    std::copy(va.data(), va.data() + va.size(), out.data());
    int ia = a.id;
    return tape.push(std::move(out), {a}, [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& g = t.grad(Var<T>{self});
        axpy(g.size(), T(1), g.data(), t.grad_acc(ia).data());
    });
}

}  // namespace modnet
