#include "dtd/engine.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace dtd {

// --- RegionRootTable --------------------------------------------------------

namespace {

// Pattern match with hinge ties on the query side acting as wildcards.
bool closure_match(const std::vector<Mask>& query_masks, const std::vector<Vec>& query_z,
                   const std::vector<Mask>& key_masks, double tol_base) {
    if (query_masks.size() != key_masks.size()) return false;
    for (size_t k = 0; k < query_masks.size(); ++k) {
        if (query_masks[k].size() != key_masks[k].size()) return false;
        double scale = 1.0 + linf_norm(query_z[k]);
        for (size_t i = 0; i < query_masks[k].size(); ++i) {
            if (std::fabs(query_z[k][i]) <= tol_base * scale) continue;  // on a hinge
            if (query_masks[k][i] != key_masks[k][i]) return false;
        }
    }
    return true;
}

constexpr double kHingeTieTol = 1e-9;

}  // namespace

void RegionRootTable::add(size_t layer, RegionFingerprint key, Vec root) {
    entries_[layer].push_back(Entry{std::move(key), std::move(root)});
}

const Vec* RegionRootTable::lookup(const Network& net, size_t layer, const Vec& a_l) const {
    auto it = entries_.find(layer);
    if (it == entries_.end()) return nullptr;

    ForwardTrace suffix = forward_suffix(net, a_l, layer);
    const Vec* found = nullptr;
    for (const auto& entry : it->second) {
        if (closure_match(suffix.masks, suffix.pre_activations, entry.key.patterns,
                          kHingeTieTol)) {
            if (found) return nullptr;  // ambiguous
            found = &entry.root;
        }
    }
    return found;
}

void RegionRootTable::validate(const Network& net) const {
    for (const auto& [layer, entries] : entries_) {
        for (const auto& entry : entries) {
            ForwardTrace suffix = forward_suffix(net, entry.root, layer);
            if (!closure_match(suffix.masks, suffix.pre_activations, entry.key.patterns,
                               kHingeTieTol)) {
                throw RootUnavailableError("table root does not carry its key fingerprint at layer " +
                                           std::to_string(layer));
            }
        }
    }
}

// --- RootPolicy -------------------------------------------------------------

RootPolicy RootPolicy::rule_based(RuleKind rule) {
    RootPolicy p;
    p.layers_.push_back(LayerRootPolicy::from_rule(rule));
    p.label_ = "rule:" + rule_name(rule);
    return p;
}

RootPolicy RootPolicy::rule_based(std::vector<RuleKind> per_layer) {
    if (per_layer.empty()) throw DtdError("rule_based: empty rule list");
    RootPolicy p;
    p.label_ = "rule:";
    for (size_t i = 0; i < per_layer.size(); ++i) {
        p.layers_.push_back(LayerRootPolicy::from_rule(per_layer[i]));
        p.label_ += (i ? "," : "") + rule_name(per_layer[i]);
    }
    return p;
}

RootPolicy RootPolicy::constant_per_region(RegionRootTable table) {
    RootPolicy p;
    p.layers_.push_back(LayerRootPolicy::constant());
    p.table_ = std::move(table);
    p.label_ = "constant-per-region";
    return p;
}

RootPolicy RootPolicy::custom(TapeRootFn fn) {
    RootPolicy p;
    p.layers_.push_back(LayerRootPolicy::from_fn(std::move(fn)));
    p.label_ = "custom";
    return p;
}

RootPolicy RootPolicy::layered(std::vector<LayerRootPolicy> per_layer, RegionRootTable table) {
    if (per_layer.empty()) throw DtdError("layered: empty policy list");
    RootPolicy p;
    p.layers_ = std::move(per_layer);
    p.table_ = std::move(table);
    p.label_ = "layered";
    return p;
}

const LayerRootPolicy& RootPolicy::at(size_t layer, size_t depth) const {
    if (layers_.size() == 1) return layers_[0];
    if (layers_.size() != depth) throw DtdError("policy layer count does not match network depth");
    if (layer < 1 || layer > depth) throw DtdError("policy layer index out of range");
    return layers_[layer - 1];
}

RegionRootTable single_input_root_table(const Network& net, const Vec& x,
                                        const std::vector<Vec>& roots_per_layer) {
    if (roots_per_layer.size() != net.depth()) {
        throw DtdError("single_input_root_table: need one root per layer");
    }
    ForwardTrace trace = forward(net, x);
    RegionRootTable table;
    for (size_t l = 1; l <= net.depth(); ++l) {
        table.add(l, fingerprint(trace, l), roots_per_layer[l - 1]);
    }
    return table;
}

// --- recursive engine -------------------------------------------------------

namespace {

struct RecursiveCtx {
    const Network& net;
    const RootPolicy& policy;
    size_t class_index;
    ForwardTrace ref;  // activation pattern of the explained input
    EngineOptions opts;
    ad::Tape tape;
    RelevanceTrace* trace;
    std::vector<bool> layer_recorded;
};

// f_l on the tape; ReLU hinge ties resolve to the explained input's mask.
std::vector<ad::Value> apply_layer_tape(RecursiveCtx& ctx, size_t l0,
                                        const std::vector<ad::Value>& a) {
    const LayerSpec& layer = ctx.net.layer(l0);
    std::vector<ad::Value> out(layer.out_dim());
    for (size_t i = 0; i < layer.out_dim(); ++i) {
        ad::Value z = ctx.tape.shift(ctx.tape.dot_const(layer.weights.row(i), a), layer.bias[i]);
        switch (layer.activation) {
            case Activation::ReLU: {
                const double tol = kHingeTieTol * (1.0 + std::fabs(ctx.ref.pre_activations[l0][i]));
                out[i] = ctx.tape.relu(z, ctx.ref.masks[l0][i] ? 1.0 : 0.0, tol);
                break;
            }
            case Activation::Softplus:
                out[i] = ctx.tape.softplus(z, layer.softplus_beta);
                break;
            case Activation::Identity:
                out[i] = z;
                break;
        }
    }
    return out;
}

void record_layer_values(RecursiveCtx& ctx, size_t l, const Vec& values) {
    if (!ctx.layer_recorded[l - 1]) {
        ctx.trace->per_layer[l - 1] = values;
        ctx.layer_recorded[l - 1] = true;
    }
}

void record_root(RecursiveCtx& ctx, size_t l, int neuron, RootPoint root) {
    root.layer = static_cast<int>(l);
    root.neuron = neuron;
    if (ctx.opts.record_root_fingerprints) {
        SuffixEvalOptions fp_opts;
        fp_opts.hinge = HingePolicy::RefMasks;
        std::vector<Vec> ref_z(ctx.ref.pre_activations.begin() + static_cast<long>(l - 1),
                               ctx.ref.pre_activations.end());
        std::vector<Mask> ref_m(ctx.ref.masks.begin() + static_cast<long>(l - 1),
                                ctx.ref.masks.end());
        fp_opts.ref_pre_acts = &ref_z;
        fp_opts.ref_masks = &ref_m;
        ctx.trace->root_fingerprints.push_back(
            suffix_fingerprint(ctx.net, root.point, l, fp_opts));
    }
    ctx.trace->roots.push_back(std::move(root));
}

std::vector<ad::Value> get_relevance(RecursiveCtx& ctx, size_t l,
                                     const std::vector<ad::Value>& a_nodes);

// Shared-root step: evaluate the upstream relevance once at f_l(root) and
// backpropagate each coordinate to the root.
std::vector<ad::Value> shared_root_step(RecursiveCtx& ctx, size_t l,
                                        const std::vector<ad::Value>& a_nodes,
                                        const std::vector<ad::Value>& root_nodes) {
    const size_t d_out = ctx.net.dim(l + 1);
    std::vector<ad::Value> h = apply_layer_tape(ctx, l - 1, root_nodes);
    std::vector<ad::Value> upper = get_relevance(ctx, l + 1, h);

    std::vector<ad::Value> result(a_nodes.size());
    for (size_t i = 0; i < a_nodes.size(); ++i) result[i] = ctx.tape.constant(0.0);
    for (size_t j = 0; j < d_out; ++j) {
        ctx.tape.backward(upper[j]);
        for (size_t i = 0; i < a_nodes.size(); ++i) {
            const double g = ctx.tape.grad(root_nodes[i]);
            if (g == 0.0) continue;
            ad::Value diff = ctx.tape.sub(a_nodes[i], root_nodes[i]);
            result[i] = ctx.tape.add(result[i], ctx.tape.scale(diff, g));
        }
    }
    return result;
}

std::vector<ad::Value> get_relevance(RecursiveCtx& ctx, size_t l,
                                     const std::vector<ad::Value>& a_nodes) {
    if (ctx.tape.size() > ctx.opts.tape_node_limit) {
        throw DtdError("recursive engine tape exceeded node limit; reduce depth/width or use a "
                       "shared-root policy");
    }
    const size_t n = ctx.net.depth();
    if (l == n + 1) {
        std::vector<ad::Value> out(a_nodes.size());
        for (size_t j = 0; j < a_nodes.size(); ++j) {
            out[j] = j == ctx.class_index ? a_nodes[j] : ctx.tape.constant(0.0);
        }
        record_layer_values(ctx, l, ctx.tape.values(out));
        return out;
    }

    const LayerRootPolicy& lp = ctx.policy.at(l, n);
    const Vec a_vals = ctx.tape.values(a_nodes);
    std::vector<ad::Value> result;

    switch (lp.kind) {
        case LayerRootPolicy::Kind::Rule: {
            const LayerSpec& layer = ctx.net.layer(l - 1);
            result.resize(a_nodes.size());
            for (size_t i = 0; i < result.size(); ++i) result[i] = ctx.tape.constant(0.0);

            for (size_t j = 0; j < layer.out_dim(); ++j) {
                const Vec w_j = layer.weights.row(j);
                const double b_j = layer.bias[j];

                std::vector<ad::Value> root_nodes;
                Vec direction_vals;
                double t_val = 0.0;
                if (lp.rule.tag == RuleTag::LRP0 || lp.rule.tag == RuleTag::Epsilon) {
                    root_nodes.resize(a_nodes.size());
                    for (size_t i = 0; i < a_nodes.size(); ++i) {
                        root_nodes[i] = ctx.tape.constant(0.0);
                    }
                    direction_vals = a_vals;
                    t_val = 1.0;
                } else {
                    // Root on the neuron's hyperplane, built on the tape so the
                    // level below sees the root's input dependence.
                    std::vector<ad::Value> v_nodes(a_nodes.size());
                    switch (lp.rule.tag) {
                        case RuleTag::W2:
                            for (size_t i = 0; i < a_nodes.size(); ++i) {
                                v_nodes[i] = ctx.tape.constant(w_j[i]);
                            }
                            break;
                        case RuleTag::ZPlus:
                            for (size_t i = 0; i < a_nodes.size(); ++i) {
                                v_nodes[i] = w_j[i] >= 0.0 ? a_nodes[i] : ctx.tape.constant(0.0);
                            }
                            break;
                        default:  // Gamma
                            for (size_t i = 0; i < a_nodes.size(); ++i) {
                                v_nodes[i] = ctx.tape.scale(
                                    a_nodes[i], w_j[i] >= 0.0 ? 1.0 + lp.rule.gamma : 1.0);
                            }
                            break;
                    }
                    // Exactly on the hyperplane: nothing to redistribute.
                    const double z_val = dot(w_j, a_vals) + b_j;
                    if (z_val == 0.0) continue;
                    const Vec v_vals = ctx.tape.values(v_nodes);
                    const double wv = dot(w_j, v_vals);
                    // Angle test rather than an absolute threshold: shifted
                    // paths can make both w.v and z legitimately tiny with a
                    // well-conditioned ratio (e.g. dead activations feeding a
                    // pooling row).
                    if (std::fabs(wv) <= kDenomTol * l2_norm(w_j) * l2_norm(v_vals)) {
                        throw OrthogonalDirectionError(
                            "recursive rule root: direction orthogonal to weight row at layer " +
                            std::to_string(l) + ", neuron " + std::to_string(j));
                    }
                    ad::Value z_node =
                        ctx.tape.shift(ctx.tape.dot_const(w_j, a_nodes), b_j);
                    ad::Value wv_node = ctx.tape.dot_const(w_j, v_nodes);
                    ad::Value t_node = ctx.tape.div(z_node, wv_node);
                    root_nodes.resize(a_nodes.size());
                    for (size_t i = 0; i < a_nodes.size(); ++i) {
                        root_nodes[i] =
                            ctx.tape.sub(a_nodes[i], ctx.tape.mul(t_node, v_nodes[i]));
                    }
                    direction_vals = v_vals;
                    t_val = ctx.tape.val(t_node);
                }

                std::vector<ad::Value> h = apply_layer_tape(ctx, l - 1, root_nodes);
                std::vector<ad::Value> upper = get_relevance(ctx, l + 1, h);
                ctx.tape.backward(upper[j]);
                for (size_t i = 0; i < a_nodes.size(); ++i) {
                    const double g = ctx.tape.grad(root_nodes[i]);
                    if (g == 0.0) continue;
                    ad::Value diff = ctx.tape.sub(a_nodes[i], root_nodes[i]);
                    result[i] = ctx.tape.add(result[i], ctx.tape.scale(diff, g));
                }

                RootPoint root;
                root.point = ctx.tape.values(root_nodes);
                root.direction = std::move(direction_vals);
                root.t = t_val;
                root.residual = dot(w_j, root.point) + b_j;
                record_root(ctx, l, static_cast<int>(j), std::move(root));
            }
            break;
        }
        case LayerRootPolicy::Kind::Constant: {
            const Vec* root = ctx.policy.table().lookup(ctx.net, l, a_vals);
            if (!root) {
                throw RootUnavailableError("no constant root available for layer " +
                                           std::to_string(l) + " in this region");
            }
            // A root equal to the layer input is inadmissible on the explained
            // input's own path. On root-shifted paths the recursion input
            // lands exactly on the constant root by construction; the step is
            // then identically zero and harmless.
            if (*root == a_vals && a_vals == ctx.ref.input(l)) {
                throw RootUnavailableError("constant root equals the layer input at layer " +
                                           std::to_string(l) + " (root must differ)");
            }
            std::vector<ad::Value> root_nodes = ctx.tape.constants(*root);
            result = shared_root_step(ctx, l, a_nodes, root_nodes);

            RootPoint rp;
            rp.point = *root;
            rp.direction.resize(a_vals.size());
            for (size_t i = 0; i < a_vals.size(); ++i) {
                rp.direction[i] = a_vals[i] - (*root)[i];
            }
            rp.t = 1.0;
            record_root(ctx, l, -1, std::move(rp));
            break;
        }
        case LayerRootPolicy::Kind::Custom: {
            std::vector<ad::Value> root_nodes = lp.custom(ctx.tape, l, a_nodes);
            if (root_nodes.size() != a_nodes.size()) {
                throw RootUnavailableError("custom root function returned wrong dimension");
            }
            const Vec root_vals = ctx.tape.values(root_nodes);
            if (root_vals == a_vals) {
                throw RootUnavailableError("custom root equals the layer input at layer " +
                                           std::to_string(l));
            }
            result = shared_root_step(ctx, l, a_nodes, root_nodes);

            RootPoint rp;
            rp.point = root_vals;
            rp.direction.resize(a_vals.size());
            for (size_t i = 0; i < a_vals.size(); ++i) rp.direction[i] = a_vals[i] - root_vals[i];
            rp.t = 1.0;
            record_root(ctx, l, -1, std::move(rp));
            break;
        }
    }

    record_layer_values(ctx, l, ctx.tape.values(result));
    return result;
}

}  // namespace

RelevanceTrace relevance_recursive(const Network& net, const Vec& x, size_t class_index,
                                   const RootPolicy& policy, const EngineOptions& opts) {
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");
    // Constant roots must themselves lie in (the closure of) their key region.
    policy.table().validate(net);

    RelevanceTrace trace;
    trace.algorithm = Algorithm::Recursive;
    trace.rule_label = policy.label();
    trace.class_index = class_index;
    trace.per_layer.assign(net.depth() + 1, Vec{});

    RecursiveCtx ctx{net, policy, class_index, forward(net, x), opts, ad::Tape{}, &trace,
                     std::vector<bool>(net.depth() + 1, false)};
    std::vector<ad::Value> x_nodes = ctx.tape.constants(x);
    std::vector<ad::Value> r1 = get_relevance(ctx, 1, x_nodes);
    trace.per_layer[0] = ctx.tape.values(r1);
    return trace;
}

// --- train-free engine ------------------------------------------------------

RelevanceTrace relevance_train_free(const Network& net, const Vec& x, size_t class_index,
                                    const RuleKind& rule) {
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");

    ForwardTrace fwd = forward(net, x);
    const size_t n = net.depth();

    RelevanceTrace trace;
    trace.algorithm = Algorithm::TrainFree;
    trace.rule_label = rule_name(rule);
    trace.class_index = class_index;
    trace.per_layer.assign(n + 1, Vec{});

    Vec upper(net.output_dim(), 0.0);
    upper[class_index] = fwd.output()[class_index];
    trace.per_layer[n] = upper;

    for (size_t l = n; l >= 1; --l) {
        const LayerSpec& layer = net.layer(l - 1);
        const Vec& a_l = fwd.input(l);
        Vec lower(a_l.size(), 0.0);

        for (size_t j = 0; j < layer.out_dim(); ++j) {
            const double r_j = upper[j];
            if (r_j == 0.0) continue;
            const Vec w_j = layer.weights.row(j);
            RootPoint root = find_root_train_free(rule, w_j, layer.bias[j], a_l, r_j);
            root.layer = static_cast<int>(l);
            root.neuron = static_cast<int>(j);

            if (rule.tag == RuleTag::LRP0 || rule.tag == RuleTag::Epsilon) {
                // Contribution uses the bias-inclusive denominator (keeps the
                // gradient-times-input identity); the recorded root keeps the
                // direction formula.
                double denom = dot(w_j, a_l) + layer.bias[j];
                if (rule.tag == RuleTag::Epsilon) denom += rule.epsilon * sign_plus(denom);
                if (std::fabs(denom) < kDenomTol) {
                    throw DegenerateDenominatorError("z_j ~ 0 with nonzero relevance at layer " +
                                                     std::to_string(l) + ", neuron " +
                                                     std::to_string(j));
                }
                const double scale = r_j / denom;
                for (size_t i = 0; i < lower.size(); ++i) lower[i] += a_l[i] * w_j[i] * scale;
            } else {
                // r_j fully redistributed along the line to the root.
                for (size_t i = 0; i < lower.size(); ++i) {
                    lower[i] += w_j[i] * (a_l[i] - root.point[i]);
                }
            }
            trace.roots.push_back(std::move(root));
        }
        trace.per_layer[l - 1] = std::move(lower);
        upper = trace.per_layer[l - 1];
    }
    return trace;
}

// --- saliency / helpers ------------------------------------------------------

SaliencyResult saliency(const RelevanceTrace& trace, bool normalize) {
    if (trace.per_layer.empty() || trace.per_layer[0].empty()) {
        throw DtdError("trace has no input-layer relevance");
    }
    SaliencyResult result;
    result.values = trace.per_layer[0];
    if (!normalize) return result;

    const auto [lo_it, hi_it] = std::minmax_element(result.values.begin(), result.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        result.values.assign(result.values.size(), 0.0);
        result.degenerate = true;
        return result;
    }
    for (double& v : result.values) v = (v - lo) / (hi - lo);
    return result;
}

Vec relevance_at_layer(const Network& net, const Vec& x, size_t class_index,
                       const RuleKind& rule, size_t layer) {
    if (layer < 1 || layer > net.depth() + 1) throw ShapeError("relevance layer out of range");
    RelevanceTrace trace = relevance_train_free(net, x, class_index, rule);
    return trace.per_layer[layer - 1];
}

std::string trace_to_json(const RelevanceTrace& trace) {
    nlohmann::json j;
    j["algorithm"] = trace.algorithm == Algorithm::Recursive ? "recursive" : "train_free";
    j["rule"] = trace.rule_label;
    j["class"] = trace.class_index;
    j["relevances"] = nlohmann::json::array();
    for (const auto& r : trace.per_layer) j["relevances"].push_back(r);
    j["roots"] = nlohmann::json::array();
    for (const auto& root : trace.roots) {
        nlohmann::json jr;
        jr["layer"] = root.layer;
        jr["neuron"] = root.neuron;
        jr["point"] = root.point;
        jr["t"] = root.t;
        jr["residual"] = root.residual;
        j["roots"].push_back(std::move(jr));
    }
    return j.dump(2);
}

}  // namespace dtd
