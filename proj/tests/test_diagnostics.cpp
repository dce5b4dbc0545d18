#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dtd/diagnostics.hpp"
#include "test_util.hpp"

using namespace dtd;
using namespace dtd::testutil;

namespace {

RootPoint root_at(int layer, int neuron, Vec point) {
    RootPoint root;
    root.layer = layer;
    root.neuron = neuron;
    root.point = std::move(point);
    return root;
}

// z+ root of one output row, as a differentiable shared root function for the
// top layer. Note: picking the explained row itself makes the root-Jacobian
// term vanish identically (the root function maps onto that row's hyperplane,
// so its Jacobian annihilates the upstream derivative direction); tests that
// exercise the term use a different row.
TapeRootFn zplus_row_root_fn(const Network& net, size_t row) {
    const LayerSpec& top = net.layers().back();
    const Vec w = top.weights.row(row);
    const double b = top.bias[row];
    return [w, b](ad::Tape& tape, size_t, const std::vector<ad::Value>& a) {
        std::vector<ad::Value> v(a.size());
        for (size_t i = 0; i < a.size(); ++i) v[i] = w[i] >= 0.0 ? a[i] : tape.constant(0.0);
        ad::Value rel = tape.relu(tape.shift(tape.dot_const(w, a), b), 1.0, 0.0);
        ad::Value t = tape.div(rel, tape.dot_const(w, v));
        std::vector<ad::Value> root(a.size());
        for (size_t i = 0; i < a.size(); ++i) root[i] = tape.sub(a[i], tape.mul(t, v[i]));
        return root;
    };
}

}  // namespace

TEST_CASE("check_root_region: in-region perturbation keeps the gradient") {
    Network net = random_net({4, 5, 3}, 60);
    Rng rng(60);
    Vec x = random_vec(4, rng);
    Vec nearby = x;
    for (auto& v : nearby) v *= 1.0 - 1e-6;
    if (fingerprint(forward(net, x), 1) == fingerprint(forward(net, nearby), 1)) {
        RegionCheckResult res = check_root_region(net, x, 0, root_at(1, 0, nearby), 1);
        CHECK(res.same_gradient);
        CHECK(res.same_fingerprint);
        CHECK(res.gradient_gap <= 1e-12);
    }
}

TEST_CASE("check_root_region: hinge root counts as active, output gap reported") {
    // f(x) = [x - 1]^+, x = 2, root on the hinge at 1.
    Network net = single_row_net({1.0}, -1.0);
    RegionCheckResult res = check_root_region(net, {2.0}, 0, root_at(1, 0, {1.0}), 1);
    CHECK(res.same_gradient);
    CHECK(res.gradient_gap <= 1e-12);
    CHECK(res.output_gap == doctest::Approx(1.0));
    CHECK(!res.same_output);
}

TEST_CASE("check_root_region: crafted mask flip in layer 2 breaks gradient equality") {
    // Layer 1 identity (2 units), layer 2 single relu unit on z = a_0 - a_1.
    LayerSpec l1;
    l1.weights = Matrix(2, 2);
    l1.weights(0, 0) = 1.0;
    l1.weights(1, 1) = 1.0;
    l1.bias = {0.0, 0.0};
    LayerSpec l2;
    l2.weights = Matrix(1, 2);
    l2.weights(0, 0) = 1.0;
    l2.weights(0, 1) = -1.0;
    l2.bias = {0.0};
    Network net({l1, l2});

    const Vec x = {3.0, 1.0};                  // layer-2 unit active (z = 2)
    RegionCheckResult res = check_root_region(net, x, 0, root_at(1, 0, {1.0, 3.0}), 1);
    CHECK(!res.same_gradient);                 // root flips the layer-2 unit off
    CHECK(!res.same_fingerprint);
    CHECK(res.gradient_gap > 0.5);
}

TEST_CASE("check_root_region: same fingerprint implies tiny gradient gap") {
    Rng rng(61);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Network net = random_net({5, 6, 4}, 1200 + seed);
        Vec x = random_vec(5, rng);
        Vec probe = random_vec(5, rng);
        RegionCheckResult res = check_root_region(net, x, 0, root_at(1, 0, probe), 1);
        if (res.same_fingerprint) CHECK(res.gradient_gap <= 1e-12);
    }
}

TEST_CASE("region audit: deterministic, fractions in range, linear net fully same-region") {
    Network net = random_net({6, 6, 6, 6}, 62, Activation::ReLU, false, true);
    const std::vector<RuleKind> rules = {RuleKind::lrp0(), RuleKind::zplus()};
    auto a = run_region_audit(net, rules, 20, 0.1, 777);
    auto b = run_region_audit(net, rules, 20, 0.1, 777);
    REQUIRE(a.size() == 2);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].frac_same_region == b[i].frac_same_region);
        CHECK(a[i].frac_same_output == b[i].frac_same_output);
        CHECK(a[i].frac_same_region >= 0.0);
        CHECK(a[i].frac_same_region <= 1.0);
        CHECK(a[i].roots_checked > 0);
    }

    Network linear = random_net({4, 4, 2}, 63, Activation::Identity);
    auto lin = run_region_audit(linear, {RuleKind::w2()}, 10, 0.0, 5);
    CHECK(lin[0].frac_same_region == 1.0);
}

TEST_CASE("region audit: zero samples rejected, exhaustion detected") {
    Network net = random_net({4, 4, 2}, 64);
    CHECK_THROWS_AS((void)run_region_audit(net, {RuleKind::zplus()}, 0, 0.1, 1), DtdError);

    // Output can never exceed the threshold: f <= 0 everywhere.
    LayerSpec dead;
    dead.weights = Matrix(1, 2, 0.0);
    dead.bias = {-5.0};
    Network dead_net({dead});
    CHECK_THROWS_AS((void)run_region_audit(dead_net, {RuleKind::zplus()}, 5, 0.1, 1),
                    SamplerExhaustedError);
}

TEST_CASE("region nesting: fingerprint equality from layer l implies it for suffixes") {
    Rng rng(65);
    size_t verified = 0;
    for (uint64_t net_seed = 0; net_seed < 6 && verified < 50; ++net_seed) {
    Network net = random_net({8, 8, 8, 8}, 65 + net_seed, Activation::ReLU, false, true);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = random_vec(8, rng);
        if (forward(net, x).output()[0] <= 0.1) continue;
        ForwardTrace fwd = forward(net, x);

        // Candidate roots: every train-free root plus a guaranteed in-region
        // point per layer (train-free roots rarely keep the whole suffix
        // pattern, which would leave the property vacuous).
        std::vector<RootPoint> candidates;
        RelevanceTrace trace = relevance_train_free(net, x, 0, RuleKind::zplus());
        candidates = trace.roots;
        for (size_t l = 1; l <= net.depth(); ++l) {
            RootPoint shrunk;
            shrunk.layer = static_cast<int>(l);
            shrunk.neuron = 0;
            shrunk.point = shrink_into_region(net, fwd.input(l), l);
            candidates.push_back(std::move(shrunk));
        }

        for (const RootPoint& root : candidates) {
            const size_t l = static_cast<size_t>(root.layer);
            RegionCheckResult res = check_root_region(net, x, 0, root, l);
            if (!res.same_fingerprint) continue;
            // Same full-suffix pattern => same pattern for every shorter suffix.
            ForwardTrace root_suffix = forward_suffix(net, root.point, l);
            for (size_t m = l; m <= net.depth(); ++m) {
                Vec r_m = root_suffix.inputs[m - l];
                SuffixEvalOptions opts;
                opts.hinge = HingePolicy::ActiveTies;
                std::vector<Vec> refs(fwd.pre_activations.begin() + static_cast<long>(m - 1),
                                      fwd.pre_activations.end());
                opts.ref_pre_acts = &refs;
                CHECK(suffix_fingerprint(net, r_m, m, opts) == fingerprint(fwd, m));
                ++verified;
            }
        }
    }
    }
    CHECK(verified > 0);
}

TEST_CASE("constant-root identity: zero roots on a zero-bias net") {
    Rng rng(66);
    Network net = random_net({6, 7, 4}, 66, Activation::ReLU, /*zero_bias=*/true);
    Vec x = random_vec(6, rng);
    std::vector<Vec> zero_roots;
    for (size_t l = 1; l <= net.depth(); ++l) zero_roots.push_back(Vec(net.dim(l), 0.0));
    RootPolicy policy =
        RootPolicy::constant_per_region(single_input_root_table(net, x, zero_roots));
    CHECK(verify_constant_root_identity(net, x, 0, policy) <= 1e-8);
}

TEST_CASE("constant-root identity: random in-region roots over many trials") {
    Rng rng(67);
    size_t done = 0;
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 300 && done < 100; ++seed) {
        Network net = random_net({6, 6, 5}, 1300 + seed);
        Vec x = random_vec(6, rng);
        ForwardTrace fwd = forward(net, x);
        std::vector<Vec> roots;
        bool ok = true;
        for (size_t l = 1; l <= net.depth() && ok; ++l) {
            // A fully dead layer input has no admissible constant root.
            ok = linf_norm(fwd.input(l)) > 0.0;
            if (!ok) break;
            Vec candidate = fwd.input(l);
            for (auto& v : candidate) v *= 1.0 - (0.01 + 0.05 * rng.uniform());
            ok = suffix_fingerprint(net, candidate, l) == fingerprint(fwd, l);
            roots.push_back(candidate);
        }
        if (!ok) continue;
        RootPolicy policy =
            RootPolicy::constant_per_region(single_input_root_table(net, x, roots));
        worst = std::max(worst, verify_constant_root_identity(net, x, 0, policy));
        ++done;
    }
    CHECK(done == 100);
    CHECK(worst <= 1e-8);
}

TEST_CASE("constant-root identity: degenerate root equal to the input is unavailable") {
    Network net = identity_relu_net();
    const Vec x = {1.0, 2.0};
    RootPolicy policy = RootPolicy::constant_per_region(single_input_root_table(net, x, {x}));
    CHECK_THROWS_AS((void)verify_constant_root_identity(net, x, 0, policy), RootUnavailableError);
}

TEST_CASE("root-jacobian assembly: constant root function has a zero term") {
    Rng rng(68);
    size_t done = 0;
    for (uint64_t seed = 0; seed < 30 && done < 5; ++seed) {
        Network net = random_net({6, 8, 5}, 1400 + seed);
        Vec x = random_vec(6, rng);
        try {
            Vec frozen = shrink_into_region(net, forward(net, x).input(2), 2);
            TapeRootFn constant_fn = [frozen](ad::Tape& tape, size_t,
                                              const std::vector<ad::Value>&) {
                return tape.constants(frozen);
            };
            CHECK(verify_root_jacobian_assembly(net, x, 0, 2, constant_fn) <= 1e-6);
            ++done;
        } catch (const BoundaryProximityError&) {
        } catch (const RootUnavailableError&) {
        }
    }
    CHECK(done >= 3);
}

TEST_CASE("root-jacobian assembly: z+ root function matches within fd error; ablation does not") {
    Rng rng(69);
    size_t done = 0;
    double worst = 0.0, ablated_best = 0.0;
    for (uint64_t seed = 0; seed < 120 && done < 10; ++seed) {
        Network net = random_net({6, 8, 5}, 1500 + seed);
        Vec x = random_vec(6, rng);
        ForwardTrace fwd = forward(net, x);
        if (fwd.output()[0] <= 0.3) continue;
        // The z+ root of the most active non-explained row: input-dependent,
        // and its Jacobian does not annihilate the upstream derivative.
        size_t row = 1;
        double best = -1e18;
        for (size_t m = 1; m < net.output_dim(); ++m) {
            if (fwd.pre_activation(2)[m] > best) {
                best = fwd.pre_activation(2)[m];
                row = m;
            }
        }
        if (best <= 0.3) continue;
        try {
            TapeRootFn fn = zplus_row_root_fn(net, row);
            worst = std::max(worst, verify_root_jacobian_assembly(net, x, 0, 2, fn));
            AssemblyOptions ablate;
            ablate.ablate_root_jacobian = true;
            ablated_best = std::max(ablated_best, verify_root_jacobian_assembly(net, x, 0, 2, fn, ablate));
            ++done;
        } catch (const BoundaryProximityError&) {
        } catch (const RootUnavailableError&) {
        } catch (const OrthogonalDirectionError&) {
        }
    }
    CHECK(done >= 5);
    CHECK(worst <= 1e-4);
    CHECK(ablated_best > 1e-2);
}

TEST_CASE("root-jacobian assembly: the explained row's own z+ root self-cancels the term") {
    // The z+ root function of the explained row maps onto that row's
    // hyperplane, so its Jacobian annihilates the upstream derivative and
    // ablating the term changes nothing.
    Rng rng(169);
    size_t done = 0;
    for (uint64_t seed = 0; seed < 60 && done < 5; ++seed) {
        Network net = random_net({6, 8, 5}, 1500 + seed);
        Vec x = random_vec(6, rng);
        if (forward(net, x).output()[0] <= 0.3) continue;
        try {
            TapeRootFn fn = zplus_row_root_fn(net, 0);
            AssemblyOptions ablate;
            ablate.ablate_root_jacobian = true;
            CHECK(verify_root_jacobian_assembly(net, x, 0, 2, fn, ablate) <= 1e-10);
            ++done;
        } catch (const BoundaryProximityError&) {
        } catch (const RootUnavailableError&) {
        }
    }
    CHECK(done >= 3);
}

TEST_CASE("higher_order_term: zero for relu and identity, nonzero for softplus") {
    Rng rng(70);
    Network relu_net = random_net({5, 7, 3}, 71);
    Network soft_net = random_net({5, 7, 3}, 71, Activation::Softplus);
    Network linear_net = random_net({5, 7, 3}, 71, Activation::Identity);

    size_t done = 0;
    for (int trial = 0; trial < 40 && done < 10; ++trial) {
        Vec x = random_vec(5, rng);
        Vec root(x.size());
        for (size_t i = 0; i < x.size(); ++i) root[i] = x[i] * 0.97;
        try {
            CHECK(higher_order_term(relu_net, x, 0, 1, root) <= 1e-10);
            ++done;
        } catch (const BoundaryProximityError&) {
            continue;
        }
        CHECK(higher_order_term(soft_net, x, 0, 1, root) > 1e-6);
        CHECK(higher_order_term(linear_net, x, 0, 1, root) <= 1e-10);
    }
    CHECK(done >= 5);
}

TEST_CASE("higher_order_term: hinge proximity raises BoundaryProximity") {
    Network net = single_row_net({1.0}, -1.0);
    // Root exactly on the hinge of the single unit.
    CHECK_THROWS_AS((void)higher_order_term(net, {2.0}, 0, 1, {1.0}), BoundaryProximityError);
}

TEST_CASE("forge_relevance: worked example") {
    Network net = single_row_net({1.0, 1.0}, 0.0);
    ForgeResult forged = forge_relevance(net, {1.0, 3.0}, {10.0, -6.0});
    CHECK(forged.root.point[0] == doctest::Approx(-9.0));
    CHECK(forged.root.point[1] == doctest::Approx(9.0));
    CHECK(forged.achieved[0] == doctest::Approx(10.0));
    CHECK(forged.achieved[1] == doctest::Approx(-6.0));
    CHECK(std::fabs(forged.root.residual) <= 1e-9);
}

TEST_CASE("forge_relevance: target proportional to w.x recovers the z-rule attribution") {
    Network net = single_row_net({0.5, -2.0}, 0.25);
    const Vec x = {2.0, -1.0};
    const double h = 0.5 * 2.0 + (-2.0) * (-1.0) + 0.25;
    REQUIRE(h > 0.0);
    Vec target = {0.5 * 2.0, (-2.0) * (-1.0)};  // w . x elementwise
    ForgeResult forged = forge_relevance(net, x, target);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(forged.achieved[i] == doctest::Approx(h * target[i] / sum(target)).epsilon(1e-12));
    }
}

TEST_CASE("forge_relevance: one-hot target concentrates all relevance") {
    Network net = single_row_net({1.0, 2.0}, 0.0);
    const Vec x = {1.0, 1.0};
    const double h = 3.0;
    ForgeResult forged = forge_relevance(net, x, {h, 0.0});
    CHECK(forged.achieved[0] == doctest::Approx(h));
    CHECK(forged.achieved[1] == doctest::Approx(0.0));
}

TEST_CASE("forge_relevance: unreachable targets") {
    Network net = single_row_net({1.0, 1.0}, 0.0);
    CHECK_THROWS_AS((void)forge_relevance(net, {1.0, 3.0}, {1.0, -1.0}), UnreachableTargetError);
    Network zero_w = single_row_net({1.0, 0.0}, 0.0);
    CHECK_THROWS_AS((void)forge_relevance(zero_w, {1.0, 3.0}, {1.0, 1.0}),
                    UnreachableTargetError);
}

TEST_CASE("forge_relevance: property over random instances") {
    Rng rng(72);
    size_t done = 0;
    for (int trial = 0; trial < 400 && done < 100; ++trial) {
        const size_t d = 2 + trial % 5;
        Vec w(d), x(d), target(d);
        for (size_t i = 0; i < d; ++i) {
            w[i] = rng.normal();
            while (std::fabs(w[i]) < 0.05) w[i] = rng.normal();
            x[i] = rng.normal();
            target[i] = rng.normal();
        }
        Network net = single_row_net(w, 0.0);
        const double h = dot(w, x);
        if (h <= 0.1 || std::fabs(sum(target)) < 1e-6) continue;
        ForgeResult forged = forge_relevance(net, x, target);
        const double ts = sum(target), as = sum(forged.achieved);
        for (size_t i = 0; i < d; ++i) {
            CHECK(forged.achieved[i] / as == doctest::Approx(target[i] / ts).epsilon(1e-10));
        }
        CHECK(as == doctest::Approx(h).epsilon(1e-10));
        CHECK(std::fabs(forged.root.residual) <= 1e-9 * (1.0 + std::fabs(h)));
        ++done;
    }
    CHECK(done == 100);
}

TEST_CASE("class_insensitivity: depth-1 z+ maps differ across classes") {
    Rng rng(73);
    Network net = random_net({8, 4}, 74);
    Vec x = random_vec(8, rng, /*nonneg=*/true);
    Vec out = forward(net, x).output();
    std::vector<size_t> classes;
    for (size_t c = 0; c < 4; ++c) {
        if (out[c] > 0.05) classes.push_back(c);
    }
    if (classes.size() >= 2) {
        SimilarityReport rep = class_insensitivity(net, x, RuleKind::zplus(), classes);
        double min_cos = 1.0;
        for (size_t a = 0; a < classes.size(); ++a) {
            for (size_t b = a + 1; b < classes.size(); ++b) {
                if (!std::isnan(rep.cosine(a, b))) min_cos = std::min(min_cos, rep.cosine(a, b));
            }
        }
        CHECK(min_cos < 1.0 - 1e-6);  // no convergence after a single layer
    }
}

TEST_CASE("class_insensitivity: zero saliency reported missing") {
    // Class 1 output is forced inactive: its saliency map is degenerate.
    LayerSpec layer;
    layer.weights = Matrix(2, 2);
    layer.weights(0, 0) = 1.0;
    layer.weights(1, 0) = -1.0;
    layer.bias = {0.0, -1.0};
    Network net({layer});
    SimilarityReport rep = class_insensitivity(net, {2.0, 0.5}, RuleKind::zplus(), {0, 1});
    CHECK(!rep.missing[0]);
    CHECK(rep.missing[1]);
    CHECK(std::isnan(rep.cosine(0, 1)));
}

TEST_CASE("class_insensitivity: deep z+ maps collapse, lrp0 maps do not") {
    // Desk-scale analogue of the deep-network experiment: depth 10, width 20.
    // Deep random nets leave some logits structurally dead (the activation
    // direction itself collapses), so similarities run over the classes whose
    // maps are defined; dead classes are reported missing by design.
    Rng rng(75);
    std::vector<size_t> dims(10, 20);
    dims.push_back(5);
    size_t done = 0;
    std::vector<double> zplus_cos, lrp0_cos;
    for (uint64_t seed = 0; seed < 30 && done < 4; ++seed) {
        Network net = random_net(dims, 1600 + seed);
        Vec x;
        std::vector<size_t> alive;
        for (int attempt = 0; attempt < 300 && alive.size() < 2; ++attempt) {
            Vec candidate = random_vec(20, rng, /*nonneg=*/true);
            Vec out = forward(net, candidate).output();
            std::vector<size_t> here;
            for (size_t c = 0; c < 5; ++c) {
                if (out[c] > 0.1) here.push_back(c);
            }
            if (here.size() > alive.size()) {
                alive = here;
                x = candidate;
            }
        }
        if (alive.size() < 2) continue;
        SimilarityReport z, l;
        try {
            z = class_insensitivity(net, x, RuleKind::zplus(), alive);
            l = class_insensitivity(net, x, RuleKind::lrp0(), alive);
        } catch (const DegenerateDenominatorError&) {
            continue;  // a dead-direction neuron on the relevance path
        } catch (const OrthogonalDirectionError&) {
            continue;
        }
        for (size_t a = 0; a < alive.size(); ++a) {
            for (size_t b = a + 1; b < alive.size(); ++b) {
                if (!std::isnan(z.cosine(a, b))) zplus_cos.push_back(z.cosine(a, b));
                if (!std::isnan(l.cosine(a, b))) lrp0_cos.push_back(l.cosine(a, b));
            }
        }
        ++done;
    }
    REQUIRE(done >= 2);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    CHECK(median(zplus_cos) >= 0.999);
    CHECK(median(lrp0_cos) < median(zplus_cos));
}

TEST_CASE("similarity report serializes with nulls for missing pairs") {
    LayerSpec layer;
    layer.weights = Matrix(2, 2);
    layer.weights(0, 0) = 1.0;
    layer.weights(1, 0) = -1.0;
    layer.bias = {0.0, -1.0};
    Network net({layer});
    SimilarityReport rep = class_insensitivity(net, {2.0, 0.5}, RuleKind::zplus(), {0, 1});
    std::string json_text = similarity_to_json(rep);
    CHECK(json_text.find("\"cosine\"") != std::string::npos);
    CHECK(json_text.find("\"mean_abs_diff\"") != std::string::npos);
    CHECK(json_text.find("null") != std::string::npos);
    CHECK(json_text.find("\"missing\"") != std::string::npos);
}

TEST_CASE("redraw_last_layer changes only the last layer's weights") {
    Network net = random_net({4, 5, 3}, 76);
    Network redrawn = redraw_last_layer(net, 123);
    CHECK(net.layer(0).weights.data == redrawn.layer(0).weights.data);
    CHECK(net.layer(1).weights.data != redrawn.layer(1).weights.data);
    CHECK(net.layer(1).bias == redrawn.layer(1).bias);
}

TEST_CASE("shrink_into_region returns an interior point of the same region") {
    Rng rng(77);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Network net = random_net({5, 6, 4}, 1700 + seed);
        Vec x = random_vec(5, rng);
        Vec c = shrink_into_region(net, x, 1);
        CHECK(c != x);
        CHECK(suffix_fingerprint(net, c, 1) == fingerprint(forward(net, x), 1));
    }
}
