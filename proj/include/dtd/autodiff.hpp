// Minimal reverse-mode tape over scalars.
//
// Local partials are fixed when a node is built (all ops here have partials
// expressible from forward values), so backward is a single reverse sweep.
// relu() takes an explicit tie derivative: pre-activations that land within
// `tie_tol` of the hinge use the caller-supplied derivative instead of the
// sign of the rounded value. The relevance engine passes the activation state
// of the explained input here, which keeps gradients on the affine piece the
// input lives on even when a root sits numerically on a hyperplane.
#pragma once

#include <cstddef>
#include <vector>

#include "dtd/common.hpp"

namespace dtd::ad {

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    Value constant(double v) { return push(v, -1, -1, 0.0, 0.0); }

    double val(Value x) const { return nodes_[static_cast<size_t>(x.id)].val; }

    Value add(Value a, Value b) { return push(val(a) + val(b), a.id, b.id, 1.0, 1.0); }
    Value sub(Value a, Value b) { return push(val(a) - val(b), a.id, b.id, 1.0, -1.0); }
    Value mul(Value a, Value b) { return push(val(a) * val(b), a.id, b.id, val(b), val(a)); }

    Value div(Value a, Value b) {
        const double bv = val(b);
        return push(val(a) / bv, a.id, b.id, 1.0 / bv, -val(a) / (bv * bv));
    }

    Value scale(Value a, double c) { return push(val(a) * c, a.id, -1, c, 0.0); }
    Value shift(Value a, double c) { return push(val(a) + c, a.id, -1, 1.0, 0.0); }
    Value neg(Value a) { return scale(a, -1.0); }

    // max(z, 0); pre-activations within tie_tol of the hinge follow the
    // tie branch for both value and derivative (the active branch's value at
    // the hinge is z itself, so the value distortion is at most |z|).
    Value relu(Value z, double tie_deriv, double tie_tol) {
        const double zv = val(z);
        if (zv > tie_tol) return push(zv, z.id, -1, 1.0, 0.0);
        if (zv < -tie_tol) return push(0.0, z.id, -1, 0.0, 0.0);
        return push(tie_deriv > 0.5 ? zv : 0.0, z.id, -1, tie_deriv, 0.0);
    }

    // log(1 + exp(beta z)) / beta, derivative sigmoid(beta z).
    Value softplus(Value z, double beta) {
        const double t = beta * val(z);
        double v;
        if (t > 30.0) {
            v = val(z) + std::log1p(std::exp(-t)) / beta;
        } else {
            v = std::log1p(std::exp(t)) / beta;
        }
        const double sig = 1.0 / (1.0 + std::exp(-t));
        return push(v, z.id, -1, sig, 0.0);
    }

    size_t size() const { return nodes_.size(); }

    // Adjoints of every node w.r.t. the scalar at `output`.
    // Scratch vector reused across calls; nodes created later are untouched.
    void backward(Value output) {
        adjoint_.assign(nodes_.size(), 0.0);
        adjoint_[static_cast<size_t>(output.id)] = 1.0;
        for (int i = output.id; i >= 0; --i) {
            const double g = adjoint_[static_cast<size_t>(i)];
            if (g == 0.0) continue;
            const Node& n = nodes_[static_cast<size_t>(i)];
            if (n.a >= 0) adjoint_[static_cast<size_t>(n.a)] += g * n.da;
            if (n.b >= 0) adjoint_[static_cast<size_t>(n.b)] += g * n.db;
        }
    }

    double grad(Value x) const { return adjoint_[static_cast<size_t>(x.id)]; }

    // ---- vector conveniences -------------------------------------------

    std::vector<Value> constants(const Vec& v) {
        std::vector<Value> out(v.size());
        for (size_t i = 0; i < v.size(); ++i) out[i] = constant(v[i]);
        return out;
    }

    Vec values(const std::vector<Value>& xs) const {
        Vec out(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) out[i] = val(xs[i]);
        return out;
    }

    std::vector<Value> sub(const std::vector<Value>& a, const std::vector<Value>& b) {
        std::vector<Value> out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = sub(a[i], b[i]);
        return out;
    }

    Value dot_const(const Vec& w, const std::vector<Value>& x) {
        Value acc = constant(0.0);
        for (size_t i = 0; i < x.size(); ++i) acc = add(acc, scale(x[i], w[i]));
        return acc;
    }

    Vec gradients(const std::vector<Value>& xs) const {
        Vec out(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) out[i] = grad(xs[i]);
        return out;
    }

private:
    struct Node {
        double val;
        int a, b;
        double da, db;
    };

    Value push(double v, int a, int b, double da, double db) {
        nodes_.push_back(Node{v, a, b, da, db});
        return Value{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    std::vector<double> adjoint_;
};

}  // namespace dtd::ad
