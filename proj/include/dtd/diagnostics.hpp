// Audits of the method's own assumptions: do roots stay in the input's linear
// region, does the constant-root case collapse to gradient-times-input, how do
// input-dependent roots distort the decomposition, and can a root be crafted
// to produce an arbitrary attribution.
#pragma once

#include <cstdint>
#include <vector>

#include "dtd/engine.hpp"
#include "dtd/network.hpp"
#include "dtd/rng.hpp"
#include "dtd/rules.hpp"

namespace dtd {

struct RegionCheckResult {
    bool same_gradient = false;
    double gradient_gap = 0.0;  // L-inf of the suffix-gradient difference
    bool same_fingerprint = false;
    bool same_output = false;
    double output_gap = 0.0;
};

struct RegionCheckOptions {
    double gradient_tol = 1e-6;
    double output_tol = 1e-9;
};

// Compares gradient, fingerprint and output of (f_n o ... o f_l)_xi at the
// input's layer-l activation vs. the root point. Points that land numerically
// on a hinge are resolved to the active side.
RegionCheckResult check_root_region(const Network& net, const Vec& x, size_t class_index,
                                    const RootPoint& root, size_t from_layer,
                                    const RegionCheckOptions& opts = {});

struct RegionAuditReport {
    RuleKind rule;
    size_t samples = 0;
    size_t roots_checked = 0;
    double frac_same_region = 0.0;
    double frac_same_output = 0.0;
    uint64_t seed = 0;
};

// Standard-normal inputs accepted while f_xi(x) > min_output; gives up after
// 100 * count draws (SamplerExhaustedError).
std::vector<Vec> rejection_sample_inputs(const Network& net, size_t count, double min_output,
                                         size_t class_index, Rng& rng);

// For each rule: run the train-free decomposition on each sampled input,
// region-check every recorded root, and aggregate the same-region /
// same-output fractions over all roots. The same-region fraction uses the
// fingerprint criterion (pattern equality over the whole suffix), which is
// the uniform necessary condition for a root to be admissible for every
// relevance function that consumes it; the explained row's gradient gap is
// still available per root through check_root_region.
std::vector<RegionAuditReport> run_region_audit(const Network& net, const std::vector<RuleKind>& rules,
                                     size_t n_samples, double min_output, uint64_t seed,
                                     size_t class_index = 0,
                                     const RegionCheckOptions& opts = {});

// Gap between the recursive relevance under a constant-per-region policy and
// the closed form R(x~1) + grad f_xi(x) . (x - x~1). For a region-keyed
// constant policy the relevance at the root itself is identically zero (the
// root of the root's region is the root), so only the gradient term remains.
double verify_constant_root_identity(const Network& net, const Vec& x, size_t class_index,
                                     const RootPolicy& constant_policy);

struct AssemblyOptions {
    double fd_step = 1e-5;
    double boundary_margin = 1e-4;
    bool ablate_root_jacobian = false;  // drop the root-Jacobian term on the assembled side
};

// For a depth-2 network with a shared differentiable root function at the top
// layer: assembles the input relevance from the layer Jacobian, the
// finite-difference Jacobian of the root function, and the upstream relevance
// derivative, and compares against the directly computed recursive relevance.
// The layer below uses a shared constant in-region root on both sides.
double verify_root_jacobian_assembly(const Network& net, const Vec& x, size_t class_index,
                                     size_t layer, const TapeRootFn& root_fn,
                                     const AssemblyOptions& opts = {});

struct HigherOrderOptions {
    double fd_step = 1e-5;
    double boundary_margin = 1e-6;
};

// Magnitude of the second-order term produced by one recursion step: the
// derivative of the root-evaluated gradient of the suffix logit, contracted
// with (a_l - root). Zero for piecewise-linear activations away from hinges,
// nonzero for Softplus.
double higher_order_term(const Network& net, const Vec& x, size_t class_index, size_t layer,
                         const Vec& root, const HigherOrderOptions& opts = {});

struct ForgeResult {
    RootPoint root;
    Vec achieved;
};

// For a one-dense-layer network with a single active neuron j: picks the root
// x~ = x - (h_j / sum(r)) * (r / w) so the redistributed relevance
// w . (x - x~) equals h_j and the per-coordinate attribution is proportional
// to the requested target.
ForgeResult forge_relevance(const Network& one_layer_net, const Vec& x, const Vec& target);

struct SimilarityReport {
    std::vector<size_t> classes;
    Matrix cosine;         // NaN where a side is missing
    Matrix mean_abs_diff;  // on the min-max scaled maps
    std::vector<uint8_t> missing;  // per class: zero or degenerate saliency
    std::vector<Vec> normalized_maps;
};

// Pairwise similarity of min-max-normalized train-free saliency maps across
// explained classes.
SimilarityReport class_insensitivity(const Network& net, const Vec& x, const RuleKind& rule,
                                     const std::vector<size_t>& classes);

// Matrices as JSON arrays; missing pairs serialize as null.
std::string similarity_to_json(const SimilarityReport& report);

// Last layer with freshly drawn weights (N(0,1)/sqrt(fan_in)); bias kept.
Network redraw_last_layer(const Network& net, uint64_t seed);

// Cosine between each class's saliency map before and after last-layer
// re-randomization (NaN per class when either map is missing).
std::vector<double> last_layer_randomization_similarity(const Network& net, const Vec& x,
                                                        const RuleKind& rule,
                                                        const std::vector<size_t>& classes,
                                                        uint64_t redraw_seed);

// Deterministic interior point of the input's region at the given layer
// (shrinks toward the origin until the fingerprint matches). Used to build
// in-region constant roots.
Vec shrink_into_region(const Network& net, const Vec& x, size_t from_layer);

}  // namespace dtd
