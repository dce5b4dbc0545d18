// Root-point search directions, explicit root construction, and the
// closed-form single-layer relevance propagation for the DTD/LRP rules.
#pragma once

#include <string>

#include "dtd/common.hpp"

namespace dtd {

enum class RuleTag { LRP0, Epsilon, W2, ZPlus, Gamma };

// One of: lrp0, eps:<e>, w2, zplus, gamma:<g>. "ab:1:0" parses to zplus
// (alpha1-beta0 is the same propagation).
struct RuleKind {
    RuleTag tag = RuleTag::LRP0;
    double epsilon = 0.0;  // > 0 for Epsilon
    double gamma = 0.0;    // >= 0 for Gamma

    static RuleKind lrp0() { return {RuleTag::LRP0, 0.0, 0.0}; }
    static RuleKind eps(double e);
    static RuleKind w2() { return {RuleTag::W2, 0.0, 0.0}; }
    static RuleKind zplus() { return {RuleTag::ZPlus, 0.0, 0.0}; }
    static RuleKind gamma_rule(double g);

    // Hyperplane-seeking rules place roots on w_j . x + b_j = 0.
    bool seeks_hyperplane() const {
        return tag == RuleTag::W2 || tag == RuleTag::ZPlus || tag == RuleTag::Gamma;
    }
};

RuleKind parse_rule(const std::string& text);
std::string rule_name(const RuleKind& rule);

// Taylor root for one (layer, neuron): x~ = a_l - t*v, residual = w_j . x~ + b_j.
// zero_relevance marks the t = 0 signal (the neuron contributes nothing and
// callers skip it; a root equal to the input is not admissible).
struct RootPoint {
    int layer = 0;    // 1-based layer index
    int neuron = 0;   // row j of the layer's weight matrix, -1 for shared roots
    Vec point;
    Vec direction;
    double t = 0.0;
    double residual = 0.0;
    bool zero_relevance = false;
};

// Tolerance for |w.v| (orthogonal direction) and closed-form denominators.
inline constexpr double kDenomTol = 1e-12;

// Search direction v_j for the rule at layer input a_l:
//   w2     -> w_j
//   zplus  -> 1_{w_j>=0} . a_l
//   gamma  -> a_l . (1 + gamma * 1_{w_j>=0})
//   lrp0/eps -> a_l (the z-direction; the explicit root special-cases to 0)
Vec search_direction(const RuleKind& rule, const Vec& w_j, const Vec& a_l);

// Intersection of the line a_l - t*v with the neuron's hyperplane,
// t = (w_j . a_l + b_j) / (w_j . v). lrp0/eps return the origin.
// Throws OrthogonalDirectionError when |w_j . v| < kDenomTol; returns a
// zero_relevance root when the input already sits on the hyperplane.
RootPoint find_root_linear(const RuleKind& rule, const Vec& w_j, double b_j, const Vec& a_l);

// Train-free root, t = R_j / (w_j . v); satisfies w_j . (a_l - x~) = R_j.
RootPoint find_root_train_free(const RuleKind& rule, const Vec& w_j, double b_j,
                               const Vec& a_l, double relevance_j);

// One layer of relevance propagation in closed form:
//   w2/zplus/gamma:  R_i += (w_ji * v_i) / (w_j . v) * R_j
//   lrp0:            R_i += a_i * w_ji * R_j / z_j,        z_j = w_j . a + b_j
//   eps:             denominator z_j + eps * sign(z_j)     (sign(0) = +1)
// Neurons with R_j = 0 are skipped. A denominator below kDenomTol with
// R_j != 0 throws DegenerateDenominatorError (never possible for eps).
Vec propagate_closed_form(const RuleKind& rule, const Matrix& weights, const Vec& bias,
                          const Vec& a_l, const Vec& relevance_upper);

}  // namespace dtd
