// Small dense feed-forward networks: forward traces, exact reverse-mode
// gradients, activation-pattern fingerprints, finite-difference oracle.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtd/common.hpp"

namespace dtd {

enum class Activation { ReLU, Softplus, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
    Matrix weights;           // shape d_{l+1} x d_l
    Vec bias;                 // length d_{l+1}
    Activation activation = Activation::ReLU;
    double softplus_beta = 1.0;

    size_t in_dim() const { return weights.cols; }
    size_t out_dim() const { return weights.rows; }

    void validate() const;

    double activate(double z) const;
    // Derivative of the activation; ReLU at z = 0 uses the active branch.
    double activate_deriv(double z) const;
};

// Dimension caps; this is a desk-scale tool with dense Jacobians.
struct NetworkLimits {
    size_t max_width = 512;
    size_t max_depth = 32;
};

class Network {
public:
    Network() = default;
    Network(std::vector<LayerSpec> layers, NetworkLimits limits = {});

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const LayerSpec& layer(size_t l) const { return layers_[l]; }  // 0-based

    size_t depth() const { return layers_.size(); }                  // n
    size_t input_dim() const { return layers_.front().in_dim(); }    // d_1
    size_t output_dim() const { return layers_.back().out_dim(); }   // d_{n+1}
    size_t dim(size_t l) const;  // d_l for l in [1, n+1]

    bool is_relu_only() const;

private:
    std::vector<LayerSpec> layers_;
};

// Inputs a_1..a_{n+1}, pre-activations z_1..z_n, masks m_1..m_n.
// A unit counts as active when z >= 0 (the hinge is resolved to the active
// side, matching how gradients are taken).
struct ForwardTrace {
    std::vector<Vec> inputs;
    std::vector<Vec> pre_activations;
    std::vector<Mask> masks;

    const Vec& input(size_t l) const { return inputs[l - 1]; }          // a_l, 1-based
    const Vec& output() const { return inputs.back(); }                 // a_{n+1}
    const Vec& pre_activation(size_t l) const { return pre_activations[l - 1]; }
    const Mask& mask(size_t l) const { return masks[l - 1]; }
};

// Concatenated activation patterns from a chosen layer onward. Equal
// fingerprints imply the piecewise-affine map over those layers coincides,
// hence equal gradients. Only meaningful for ReLU/Identity layers; Softplus
// layers contribute all-active patterns.
struct RegionFingerprint {
    size_t from_layer = 1;  // 1-based
    std::vector<Mask> patterns;

    bool operator==(const RegionFingerprint& other) const {
        return from_layer == other.from_layer && patterns == other.patterns;
    }
    uint64_t hash() const { return fnv1a_bits(patterns); }
};

struct GradientResult {
    double value = 0.0;   // f_xi at the point
    Vec gradient;         // w.r.t. the chosen layer input
    size_t class_index = 0;
};

ForwardTrace forward(const Network& net, const Vec& x);

// Exact reverse-mode gradient of f_xi w.r.t. a_l (1 <= wrt_layer <= n+1).
// For ReLU networks this is the row of the affine piece the input lies on.
GradientResult gradient(const Network& net, const Vec& x, size_t class_index,
                        size_t wrt_layer = 1);

RegionFingerprint fingerprint(const ForwardTrace& trace, size_t from_layer = 1);

// Central differences; exact for linear maps, unreliable at ReLU hinges
// (callers must offset the input away from any z = 0).
Vec finite_difference_gradient(const Network& net, const Vec& x, size_t class_index,
                               double step = 1e-4);

// --- suffix-network evaluation (layers from_layer..n) ----------------------

// Forward through layers from_layer..n starting from a layer input a_l.
ForwardTrace forward_suffix(const Network& net, const Vec& a_l, size_t from_layer);

// Hinge handling for suffix gradients evaluated at points that may sit
// numerically on a hyperplane (e.g. root points).
enum class HingePolicy {
    Exact,       // z >= 0 active, no tolerance
    ActiveTies,  // |z| <= tol resolves to active
    RefMasks,    // |z| <= tol resolves to a reference mask
};

struct SuffixEvalOptions {
    HingePolicy hinge = HingePolicy::Exact;
    double tie_tol = 1e-9;                       // scaled by (1 + |z_ref|) when refs given
    const std::vector<Vec>* ref_pre_acts = nullptr;   // original-path z per suffix layer
    const std::vector<Mask>* ref_masks = nullptr;     // original-path masks per suffix layer
};

// Gradient of (f_n o ... o f_from)_xi w.r.t. the layer input, with hinge
// resolution per options. Also returns the suffix output value.
GradientResult suffix_gradient(const Network& net, const Vec& a_l, size_t from_layer,
                               size_t class_index, const SuffixEvalOptions& opts = {});

// Fingerprint of a point fed in at from_layer, with the same hinge resolution.
RegionFingerprint suffix_fingerprint(const Network& net, const Vec& a_l, size_t from_layer,
                                     const SuffixEvalOptions& opts = {});

// --- serialization ----------------------------------------------------------

std::string network_to_json(const Network& net);
Network network_from_json(const std::string& json_text);
Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);

}  // namespace dtd
