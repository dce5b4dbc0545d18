#include "dtd/diagnostics.hpp"

#include <cmath>

#include "json.hpp"

namespace dtd {

namespace {

constexpr double kHingeTieTol = 1e-9;

// Suffix-eval options with the active-side hinge convention, tolerance scaled
// by the explained input's pre-activations.
struct SuffixRefs {
    std::vector<Vec> pre_acts;
    std::vector<Mask> masks;
};

SuffixRefs suffix_refs(const ForwardTrace& fwd, size_t from_layer) {
    SuffixRefs refs;
    refs.pre_acts.assign(fwd.pre_activations.begin() + static_cast<long>(from_layer - 1),
                         fwd.pre_activations.end());
    refs.masks.assign(fwd.masks.begin() + static_cast<long>(from_layer - 1), fwd.masks.end());
    return refs;
}

}  // namespace

RegionCheckResult check_root_region(const Network& net, const Vec& x, size_t class_index,
                                    const RootPoint& root, size_t from_layer,
                                    const RegionCheckOptions& opts) {
    if (root.layer != static_cast<int>(from_layer)) {
        throw DtdError("root layer does not match from_layer");
    }
    ForwardTrace fwd = forward(net, x);
    const Vec& a_l = fwd.input(from_layer);
    if (root.point.size() != a_l.size()) throw ShapeError("root point has wrong dimension");

    SuffixRefs refs = suffix_refs(fwd, from_layer);
    SuffixEvalOptions eval;
    eval.hinge = HingePolicy::ActiveTies;
    eval.tie_tol = kHingeTieTol;
    eval.ref_pre_acts = &refs.pre_acts;

    GradientResult g_input = suffix_gradient(net, a_l, from_layer, class_index);
    GradientResult g_root = suffix_gradient(net, root.point, from_layer, class_index, eval);

    RegionCheckResult result;
    result.gradient_gap = linf_diff(g_input.gradient, g_root.gradient);
    result.same_gradient = result.gradient_gap <= opts.gradient_tol;
    result.output_gap = std::fabs(g_input.value - g_root.value);
    result.same_output = result.output_gap <= opts.output_tol;
    result.same_fingerprint =
        fingerprint(fwd, from_layer) == suffix_fingerprint(net, root.point, from_layer, eval);
    return result;
}

std::vector<Vec> rejection_sample_inputs(const Network& net, size_t count, double min_output,
                                         size_t class_index, Rng& rng) {
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");
    std::vector<Vec> accepted;
    accepted.reserve(count);
    const size_t max_draws = 100 * count;
    size_t draws = 0;
    while (accepted.size() < count) {
        if (draws >= max_draws) {
            throw SamplerExhaustedError("could not find " + std::to_string(count) +
                                        " inputs with output > " + std::to_string(min_output) +
                                        " in " + std::to_string(max_draws) + " draws");
        }
        ++draws;
        Vec x(net.input_dim());
        for (double& v : x) v = rng.normal();
        if (forward(net, x).output()[class_index] > min_output) accepted.push_back(std::move(x));
    }
    return accepted;
}

std::vector<RegionAuditReport> run_region_audit(const Network& net, const std::vector<RuleKind>& rules,
                                     size_t n_samples, double min_output, uint64_t seed,
                                     size_t class_index, const RegionCheckOptions& opts) {
    if (n_samples == 0) throw DtdError("n_samples must be positive");
    if (rules.empty()) throw DtdError("rule set must not be empty");

    Rng rng(seed);
    std::vector<Vec> inputs = rejection_sample_inputs(net, n_samples, min_output, class_index, rng);

    std::vector<RegionAuditReport> reports;
    for (const RuleKind& rule : rules) {
        RegionAuditReport report;
        report.rule = rule;
        report.samples = n_samples;
        report.seed = seed;
        size_t same_region = 0, same_output = 0, total = 0;
        for (const Vec& x : inputs) {
            RelevanceTrace trace = relevance_train_free(net, x, class_index, rule);
            for (const RootPoint& root : trace.roots) {
                RegionCheckResult check = check_root_region(
                    net, x, class_index, root, static_cast<size_t>(root.layer), opts);
                ++total;
                // Headline region membership is the fingerprint criterion: a
                // per-neuron root must stay on the affine piece of every
                // relevance function it serves, not just the explained row's,
                // and pattern equality is the uniform necessary condition.
                if (check.same_fingerprint) ++same_region;
                if (check.same_output) ++same_output;
            }
        }
        report.roots_checked = total;
        report.frac_same_region = total ? static_cast<double>(same_region) / total : 0.0;
        report.frac_same_output = total ? static_cast<double>(same_output) / total : 0.0;
        reports.push_back(report);
    }
    return reports;
}

double verify_constant_root_identity(const Network& net, const Vec& x, size_t class_index,
                                     const RootPolicy& constant_policy) {
    if (constant_policy.at(1, net.depth()).kind != LayerRootPolicy::Kind::Constant) {
        throw DtdError("constant-root identity requires a constant-per-region policy");
    }
    const Vec* root1 = constant_policy.table().lookup(net, 1, x);
    if (!root1) throw RootUnavailableError("no layer-1 root for the input's region");

    RelevanceTrace trace = relevance_recursive(net, x, class_index, constant_policy);
    Vec grad = gradient(net, x, class_index, 1).gradient;
    Vec expected(x.size());
    for (size_t i = 0; i < x.size(); ++i) expected[i] = grad[i] * (x[i] - (*root1)[i]);
    return linf_diff(trace.per_layer[0], expected);
}

Vec shrink_into_region(const Network& net, const Vec& x, size_t from_layer) {
    const RegionFingerprint key = suffix_fingerprint(net, x, from_layer);
    for (double s : {0.2, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4, 1e-5}) {
        Vec candidate(x.size());
        for (size_t i = 0; i < x.size(); ++i) candidate[i] = x[i] * (1.0 - s);
        if (suffix_fingerprint(net, candidate, from_layer) == key && candidate != x) {
            return candidate;
        }
    }
    throw RootUnavailableError("could not find an interior point of the input's region");
}

namespace {

// Evaluate a tape root function on plain values (scratch tape).
Vec eval_root_fn(const TapeRootFn& fn, size_t layer, const Vec& a) {
    ad::Tape tape;
    std::vector<ad::Value> nodes = tape.constants(a);
    std::vector<ad::Value> out = fn(tape, layer, nodes);
    return tape.values(out);
}

void require_margin(const Vec& z, double margin, double tie_tol, const char* what) {
    for (double v : z) {
        const double m = std::fabs(v);
        if (m < margin && m > tie_tol) {
            throw BoundaryProximityError(std::string(what) + ": pre-activation within " +
                                         std::to_string(margin) + " of a hinge");
        }
    }
}

}  // namespace

double verify_root_jacobian_assembly(const Network& net, const Vec& x, size_t class_index,
                                     size_t layer, const TapeRootFn& root_fn,
                                     const AssemblyOptions& opts) {
    if (net.depth() != 2 || layer != 2) {
        throw DtdError("root-Jacobian assembly supports depth-2 networks with layer = 2");
    }
    ForwardTrace fwd = forward(net, x);
    for (const Vec& z : fwd.pre_activations) {
        require_margin(z, opts.boundary_margin, 0.0, "assembly input path");
    }

    // Shared constant in-region root below the verified layer.
    const Vec c = shrink_into_region(net, x, 1);
    const Vec z1c_pre = [&] {
        Vec z = matvec(net.layer(0).weights, c);
        for (size_t i = 0; i < z.size(); ++i) z[i] += net.layer(0).bias[i];
        return z;
    }();
    require_margin(z1c_pre, opts.boundary_margin, 0.0, "assembly lower root path");

    // Direct recursive relevance.
    RegionRootTable table;
    table.add(1, fingerprint(fwd, 1), c);
    std::vector<LayerRootPolicy> layer_policies;
    layer_policies.push_back(LayerRootPolicy::constant());
    layer_policies.push_back(LayerRootPolicy::from_fn(root_fn));
    RootPolicy policy = RootPolicy::layered(std::move(layer_policies), std::move(table));
    const Vec direct = relevance_recursive(net, x, class_index, policy).per_layer[0];

    // Assembled side. Everything at the recursion's layer-2 input f_1(c).
    const LayerSpec& l1 = net.layer(0);
    const LayerSpec& l2 = net.layer(1);
    Vec a2(l1.out_dim());
    for (size_t i = 0; i < a2.size(); ++i) a2[i] = l1.activate(z1c_pre[i]);

    const Vec root2 = eval_root_fn(root_fn, 2, a2);
    {
        Vec z2 = matvec(l2.weights, a2);
        for (size_t i = 0; i < z2.size(); ++i) z2[i] += l2.bias[i];
        require_margin(z2, opts.boundary_margin, 0.0, "assembly layer-2 input");
        Vec z2r = matvec(l2.weights, root2);
        for (size_t i = 0; i < z2r.size(); ++i) z2r[i] += l2.bias[i];
        // The root may sit exactly on a hyperplane (tie-resolved); anything
        // between the tie tolerance and the margin is too close to call.
        require_margin(z2r, opts.boundary_margin,
                       kHingeTieTol * (1.0 + linf_norm(fwd.pre_activations[1])),
                       "assembly root");
    }

    // Upstream relevance derivative at the root, ties resolved to the
    // explained input's masks (as the engine does).
    SuffixRefs refs = suffix_refs(fwd, 2);
    SuffixEvalOptions eval;
    eval.hinge = HingePolicy::RefMasks;
    eval.tie_tol = kHingeTieTol;
    eval.ref_pre_acts = &refs.pre_acts;
    eval.ref_masks = &refs.masks;
    const Vec u = suffix_gradient(net, root2, 2, class_index, eval).gradient;

    // Root-function Jacobian by central differences.
    const size_t d2 = a2.size();
    Matrix jac_root(d2, d2);
    if (!opts.ablate_root_jacobian) {
        Vec probe = a2;
        for (size_t i = 0; i < d2; ++i) {
            probe[i] = a2[i] + opts.fd_step;
            const Vec plus = eval_root_fn(root_fn, 2, probe);
            probe[i] = a2[i] - opts.fd_step;
            const Vec minus = eval_root_fn(root_fn, 2, probe);
            probe[i] = a2[i];
            for (size_t j = 0; j < d2; ++j) {
                jac_root(j, i) = (plus[j] - minus[j]) / (2.0 * opts.fd_step);
            }
        }
    }

    // q = u - K^T u, pushed through the layer-1 Jacobian at c.
    Vec q(d2);
    for (size_t j = 0; j < d2; ++j) {
        double kt_u = 0.0;
        for (size_t m = 0; m < d2; ++m) kt_u += jac_root(m, j) * u[m];
        q[j] = u[j] - kt_u;
    }
    Vec assembled(x.size(), 0.0);
    for (size_t j = 0; j < d2; ++j) {
        const double dj = l1.activation == Activation::ReLU
                              ? (z1c_pre[j] >= 0.0 ? 1.0 : 0.0)
                              : l1.activate_deriv(z1c_pre[j]);
        const double coef = q[j] * dj;
        if (coef == 0.0) continue;
        for (size_t i = 0; i < x.size(); ++i) {
            assembled[i] += coef * l1.weights(j, i) * (x[i] - c[i]);
        }
    }
    return linf_diff(direct, assembled);
}

double higher_order_term(const Network& net, const Vec& x, size_t class_index, size_t layer,
                         const Vec& root, const HigherOrderOptions& opts) {
    if (layer < 1 || layer > net.depth()) throw ShapeError("layer out of range");
    ForwardTrace fwd = forward(net, x);
    const Vec& a_l = fwd.input(layer);
    if (root.size() != a_l.size()) throw ShapeError("root has wrong dimension");

    Vec d(a_l.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = a_l[i] - root[i];
    const double norm = l2_norm(d);
    if (norm == 0.0) return 0.0;

    auto relu_guard = [&](const Vec& point, const char* what) {
        ForwardTrace suffix = forward_suffix(net, point, layer);
        for (size_t k = 0; k < suffix.pre_activations.size(); ++k) {
            if (net.layer(layer - 1 + k).activation != Activation::ReLU) continue;
            // Strict: a point exactly on a hinge is also rejected here.
            require_margin(suffix.pre_activations[k], opts.boundary_margin, -1.0, what);
        }
    };

    Vec plus(root.size()), minus(root.size());
    for (size_t i = 0; i < root.size(); ++i) {
        plus[i] = root[i] + opts.fd_step * d[i] / norm;
        minus[i] = root[i] - opts.fd_step * d[i] / norm;
    }
    relu_guard(root, "higher_order_term root");
    relu_guard(plus, "higher_order_term root+h");
    relu_guard(minus, "higher_order_term root-h");

    const Vec g_plus = suffix_gradient(net, plus, layer, class_index).gradient;
    const Vec g_minus = suffix_gradient(net, minus, layer, class_index).gradient;
    double mag = 0.0;
    for (size_t i = 0; i < g_plus.size(); ++i) {
        mag = std::max(mag, std::fabs((g_plus[i] - g_minus[i]) / (2.0 * opts.fd_step) * norm));
    }
    return mag;
}

ForgeResult forge_relevance(const Network& one_layer_net, const Vec& x, const Vec& target) {
    if (one_layer_net.depth() != 1) throw DtdError("forge_relevance expects a one-layer network");
    if (target.size() != x.size()) throw ShapeError("target has wrong dimension");

    ForwardTrace fwd = forward(one_layer_net, x);
    const LayerSpec& layer = one_layer_net.layer(0);
    int active = -1;
    for (size_t j = 0; j < layer.out_dim(); ++j) {
        if (fwd.pre_activations[0][j] > 0.0) {
            if (active >= 0) throw DtdError("forge_relevance expects exactly one active neuron");
            active = static_cast<int>(j);
        }
    }
    if (active < 0) throw DtdError("forge_relevance expects exactly one active neuron");

    const Vec w = layer.weights.row(static_cast<size_t>(active));
    for (double wi : w) {
        if (wi == 0.0) {
            throw UnreachableTargetError("zero weight coordinate; target direction unreachable");
        }
    }
    const double target_sum = sum(target);
    if (std::fabs(target_sum) < 1e-12) {
        throw UnreachableTargetError("target sums to zero; relevance cannot be redistributed");
    }

    const double h_j = fwd.pre_activations[0][static_cast<size_t>(active)];
    ForgeResult result;
    result.root.layer = 1;
    result.root.neuron = active;
    result.root.t = h_j / target_sum;
    result.root.direction.resize(x.size());
    result.root.point.resize(x.size());
    result.achieved.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        result.root.direction[i] = target[i] / w[i];
        result.root.point[i] = x[i] - result.root.t * result.root.direction[i];
        result.achieved[i] = w[i] * (x[i] - result.root.point[i]);
    }
    result.root.residual = dot(w, result.root.point) + layer.bias[static_cast<size_t>(active)];
    return result;
}

SimilarityReport class_insensitivity(const Network& net, const Vec& x, const RuleKind& rule,
                                     const std::vector<size_t>& classes) {
    if (classes.size() < 2) throw DtdError("class_insensitivity needs at least two classes");

    SimilarityReport report;
    report.classes = classes;
    report.missing.assign(classes.size(), 0);
    report.normalized_maps.resize(classes.size());
    report.cosine = Matrix(classes.size(), classes.size(), std::nan(""));
    report.mean_abs_diff = Matrix(classes.size(), classes.size(), std::nan(""));

    for (size_t c = 0; c < classes.size(); ++c) {
        RelevanceTrace trace = relevance_train_free(net, x, classes[c], rule);
        SaliencyResult sal = saliency(trace, /*normalize=*/true);
        if (sal.degenerate) {
            report.missing[c] = 1;
        } else {
            report.normalized_maps[c] = std::move(sal.values);
        }
    }

    for (size_t a = 0; a < classes.size(); ++a) {
        for (size_t b = 0; b < classes.size(); ++b) {
            if (report.missing[a] || report.missing[b]) continue;
            const Vec& ma = report.normalized_maps[a];
            const Vec& mb = report.normalized_maps[b];
            report.cosine(a, b) = cosine(ma, mb);
            double mad = 0.0;
            for (size_t i = 0; i < ma.size(); ++i) mad += std::fabs(ma[i] - mb[i]);
            report.mean_abs_diff(a, b) = mad / static_cast<double>(ma.size());
        }
    }
    return report;
}

std::string similarity_to_json(const SimilarityReport& report) {
    nlohmann::json j;
    j["classes"] = report.classes;
    auto matrix_json = [&](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (size_t a = 0; a < m.rows; ++a) {
            nlohmann::json row = nlohmann::json::array();
            for (size_t b = 0; b < m.cols; ++b) {
                if (std::isnan(m(a, b))) {
                    row.push_back(nullptr);
                } else {
                    row.push_back(m(a, b));
                }
            }
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["cosine"] = matrix_json(report.cosine);
    j["mean_abs_diff"] = matrix_json(report.mean_abs_diff);
    j["missing"] = report.missing;
    return j.dump(2);
}

Network redraw_last_layer(const Network& net, uint64_t seed) {
    std::vector<LayerSpec> layers = net.layers();
    LayerSpec& last = layers.back();
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(last.in_dim()));
    for (size_t i = 0; i < last.weights.rows; ++i) {
        for (size_t j = 0; j < last.weights.cols; ++j) {
            last.weights(i, j) = rng.normal() * scale;
        }
    }
    return Network(std::move(layers));
}

std::vector<double> last_layer_randomization_similarity(const Network& net, const Vec& x,
                                                        const RuleKind& rule,
                                                        const std::vector<size_t>& classes,
                                                        uint64_t redraw_seed) {
    Network altered = redraw_last_layer(net, redraw_seed);
    std::vector<double> sims(classes.size(), std::nan(""));
    for (size_t c = 0; c < classes.size(); ++c) {
        SaliencyResult original =
            saliency(relevance_train_free(net, x, classes[c], rule), true);
        SaliencyResult randomized =
            saliency(relevance_train_free(altered, x, classes[c], rule), true);
        if (original.degenerate || randomized.degenerate) continue;
        sims[c] = cosine(original.values, randomized.values);
    }
    return sims;
}

}  // namespace dtd
