// End-to-end relevance algorithms: recursive full-backward decomposition
// (upstream relevance re-evaluated at root-shifted activations, derivatives by
// exact reverse mode) and the train-free variant (upstream relevance taken at
// the actual activations, per-neuron roots).
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtd/autodiff.hpp"
#include "dtd/network.hpp"
#include "dtd/rules.hpp"

namespace dtd {

enum class Algorithm { Recursive, TrainFree };

struct RelevanceTrace {
    Algorithm algorithm = Algorithm::TrainFree;
    std::string rule_label;
    size_t class_index = 0;
    // R^1 .. R^{n+1}. For the recursive algorithm, entries above layer 1 are
    // the values seen along the recursion path (first branch when a layer has
    // per-neuron roots); R^{n+1} is always one-hot valued.
    std::vector<Vec> per_layer;
    std::vector<RootPoint> roots;
    // Recursive runs record each root's region fingerprint so diagnostics can
    // flag upstream evaluations that left the input's region.
    std::vector<RegionFingerprint> root_fingerprints;

    const Vec& relevance(size_t l) const {  // 1-based
        if (l < 1 || l > per_layer.size()) throw ShapeError("relevance layer out of range");
        return per_layer[l - 1];
    }
};

// Builds a root expression on the tape from the layer-input nodes, so the
// engine can differentiate through input-dependent roots exactly.
using TapeRootFn = std::function<std::vector<ad::Value>(
    ad::Tape&, size_t layer, const std::vector<ad::Value>& a_l)>;

// Fingerprint-keyed constant roots. Lookup resolves hinge ties on the query
// side (|z| within tolerance matches either pattern), so points on region
// boundaries - the origin of a zero-bias network, say - can still be matched
// and served.
class RegionRootTable {
public:
    void add(size_t layer, RegionFingerprint key, Vec root);
    bool empty() const { return entries_.empty(); }

    // Unique closure-aware match for the query input, or nullptr.
    const Vec* lookup(const Network& net, size_t layer, const Vec& a_l) const;

    // Checks the entry's root itself carries the key fingerprint (ties
    // resolved toward the key).
    void validate(const Network& net) const;

private:
    struct Entry {
        RegionFingerprint key;
        Vec root;
    };
    std::map<size_t, std::vector<Entry>> entries_;
    friend class RootPolicy;
};

struct LayerRootPolicy {
    enum class Kind { Rule, Constant, Custom };
    Kind kind = Kind::Rule;
    RuleKind rule;       // Kind::Rule: per-neuron hyperplane roots
    TapeRootFn custom;   // Kind::Custom: one shared root per layer

    static LayerRootPolicy from_rule(RuleKind r) {
        LayerRootPolicy p;
        p.kind = Kind::Rule;
        p.rule = r;
        return p;
    }
    static LayerRootPolicy constant() {
        LayerRootPolicy p;
        p.kind = Kind::Constant;
        return p;
    }
    static LayerRootPolicy from_fn(TapeRootFn fn) {
        LayerRootPolicy p;
        p.kind = Kind::Custom;
        p.custom = std::move(fn);
        return p;
    }
};

// Rule-based policies give each upper neuron its own hyperplane root (the
// recursion then re-evaluates the upstream relevance per neuron, which is
// exponential in depth - fine at desk scale). Constant and custom policies
// give one shared root per layer and the recursion stays linear.
class RootPolicy {
public:
    static RootPolicy rule_based(RuleKind rule);
    static RootPolicy rule_based(std::vector<RuleKind> per_layer);
    static RootPolicy constant_per_region(RegionRootTable table);
    static RootPolicy custom(TapeRootFn fn);
    static RootPolicy layered(std::vector<LayerRootPolicy> per_layer, RegionRootTable table = {});

    const LayerRootPolicy& at(size_t layer, size_t depth) const;  // 1-based layer
    const RegionRootTable& table() const { return table_; }
    const std::string& label() const { return label_; }

private:
    std::vector<LayerRootPolicy> layers_;  // size 1 = broadcast
    RegionRootTable table_;
    std::string label_;
};

// Convenience: a table holding one root per layer, keyed by the regions of
// the given input.
RegionRootTable single_input_root_table(const Network& net, const Vec& x,
                                        const std::vector<Vec>& roots_per_layer);

struct EngineOptions {
    size_t tape_node_limit = 50'000'000;
    bool record_root_fingerprints = true;  // recursive only
};

RelevanceTrace relevance_recursive(const Network& net, const Vec& x, size_t class_index,
                                   const RootPolicy& policy, const EngineOptions& opts = {});

RelevanceTrace relevance_train_free(const Network& net, const Vec& x, size_t class_index,
                                    const RuleKind& rule);

struct SaliencyResult {
    Vec values;
    bool degenerate = false;  // constant map; values forced to zero
};

// R^1, optionally min-max rescaled to [0, 1].
SaliencyResult saliency(const RelevanceTrace& trace, bool normalize = false);

// R^l from the train-free trace.
Vec relevance_at_layer(const Network& net, const Vec& x, size_t class_index,
                       const RuleKind& rule, size_t layer);

std::string trace_to_json(const RelevanceTrace& trace);

}  // namespace dtd
