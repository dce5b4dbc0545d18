// Command-line front end: seeded network generation, the root-region audit
// table, single-input explanations, region rasters, and the verification
// suite. Exit codes: 0 success, 1 verification failure, 2 usage/IO error.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtd/diagnostics.hpp"
#include "dtd/engine.hpp"
#include "dtd/experiment.hpp"
#include "dtd/network.hpp"
#include "dtd/rules.hpp"

namespace {

using dtd::Vec;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dtd::DtdError("cannot write output file: " + path);
    out << content;
    if (!out) throw dtd::DtdError("failed while writing: " + path);
}

Vec parse_vector(const std::string& text) {
    Vec values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            values.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw dtd::DtdError("bad vector entry: '" + item + "'");
        }
    }
    if (values.empty()) throw dtd::DtdError("empty input vector");
    return values;
}

struct ConfigFlags {
    std::string config_path;
    std::string dims_text;
    std::string bias_mode_text;
    std::string rules_text;
    std::string init_text;
    long long seed = -1;
    long long samples = -1;
    long long class_index = -1;
    double min_output = -1.0;
    double tol_grad = -1.0;
    double tol_out = -1.0;
    double fd_step = -1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--seed", seed, "RNG seed");
        cmd->add_option("--dims", dims_text, "layer widths, e.g. 10,10,10,10");
        cmd->add_option("--bias-mode", bias_mode_text, "nonpositive|unrestricted");
        cmd->add_option("--rules", rules_text, "comma-separated rule list");
        cmd->add_option("--init", init_text, "weight init scale: fan_in|unit");
        cmd->add_option("--samples", samples, "number of sampled inputs");
        cmd->add_option("--min-output", min_output, "output threshold for the sampler");
        cmd->add_option("--class", class_index, "explained output index");
        cmd->add_option("--tol-grad", tol_grad, "gradient-equality tolerance");
        cmd->add_option("--tol-out", tol_out, "output-equality tolerance");
        cmd->add_option("--fd-step", fd_step, "finite-difference step");
    }

    dtd::ExperimentConfig resolve() const {
        dtd::ExperimentConfig config;
        if (!config_path.empty()) config = dtd::load_config(config_path);
        if (seed >= 0) config.seed = static_cast<uint64_t>(seed);
        if (!dims_text.empty()) {
            config.dims.clear();
            for (double v : parse_vector(dims_text)) config.dims.push_back(static_cast<size_t>(v));
        }
        if (!bias_mode_text.empty()) config.bias_mode = dtd::bias_mode_from_name(bias_mode_text);
        if (!init_text.empty()) config.init_scale = dtd::init_scale_from_name(init_text);
        if (!rules_text.empty()) {
            config.rules.clear();
            std::stringstream ss(rules_text);
            std::string item;
            while (std::getline(ss, item, ',')) config.rules.push_back(dtd::parse_rule(item));
        }
        if (samples >= 0) config.n_samples = static_cast<size_t>(samples);
        if (min_output >= 0.0) config.min_output = min_output;
        if (class_index >= 0) config.class_index = static_cast<size_t>(class_index);
        if (tol_grad > 0.0) config.tolerances.gradient = tol_grad;
        if (tol_out > 0.0) config.tolerances.output = tol_out;
        if (fd_step > 0.0) config.tolerances.fd_step = fd_step;
        config.validate();
        return config;
    }
};

int cmd_gen_net(const ConfigFlags& flags, const std::string& out_path) {
    dtd::ExperimentConfig config = flags.resolve();
    dtd::save_network(dtd::generate_network(config), out_path);
    std::cout << "wrote network (" << config.dims.size() - 1 << " layers) to " << out_path
              << "\n";
    return 0;
}

int cmd_audit(const ConfigFlags& flags, const std::string& out_path) {
    dtd::ExperimentConfig config = flags.resolve();
    // The root-region audit defaults to unscaled draws; fan-in scaling keeps
    // nearly every root inside its region at this width.
    if (flags.init_text.empty() && flags.config_path.empty()) {
        config.init_scale = dtd::InitScale::Unit;
    }
    dtd::Network net = dtd::generate_network(config);
    dtd::RegionCheckOptions check;
    check.gradient_tol = config.tolerances.gradient;
    check.output_tol = config.tolerances.output;
    std::vector<dtd::RegionAuditReport> reports = dtd::run_region_audit(
        net, config.rules, config.n_samples, config.min_output, config.seed,
        config.class_index, check);

    write_file(out_path, dtd::region_audit_csv(reports, config));

    std::printf("%-12s %12s %12s\n", "rule", "same-region", "same-output");
    for (const auto& r : reports) {
        std::printf("%-12s %11.2f%% %11.2f%%\n", dtd::rule_name(r.rule).c_str(),
                    100.0 * r.frac_same_region, 100.0 * r.frac_same_output);
    }
    std::cout << "report written to " << out_path << "\n";
    return 0;
}

int cmd_explain(const std::string& network_path, const std::string& input_text,
                long long input_seed, double input_min_output, const std::string& rule_text,
                size_t class_index, const std::string& out_path, bool check_roots,
                bool recursive) {
    dtd::Network net = dtd::load_network(network_path);
    Vec x;
    if (!input_text.empty()) {
        x = parse_vector(input_text);
    } else if (input_seed >= 0) {
        dtd::Rng rng(static_cast<uint64_t>(input_seed));
        if (input_min_output > 0.0) {
            // Rejection-sample until the explained logit clears the threshold.
            x = dtd::rejection_sample_inputs(net, 1, input_min_output, class_index, rng)[0];
        } else {
            x.resize(net.input_dim());
            for (double& v : x) v = rng.normal();
        }
    } else {
        throw dtd::DtdError("explain needs --input or --input-seed");
    }

    dtd::RuleKind rule = dtd::parse_rule(rule_text);
    dtd::RelevanceTrace trace =
        recursive ? dtd::relevance_recursive(net, x, class_index, dtd::RootPolicy::rule_based(rule))
                  : dtd::relevance_train_free(net, x, class_index, rule);

    nlohmann::json j = nlohmann::json::parse(dtd::trace_to_json(trace));
    if (check_roots) {
        j["region_checks"] = nlohmann::json::array();
        for (const auto& root : trace.roots) {
            if (root.neuron < 0) continue;
            dtd::RegionCheckResult res = dtd::check_root_region(
                net, x, class_index, root, static_cast<size_t>(root.layer));
            j["region_checks"].push_back({{"layer", root.layer},
                                          {"neuron", root.neuron},
                                          {"same_gradient", res.same_gradient},
                                          {"gradient_gap", res.gradient_gap},
                                          {"same_fingerprint", res.same_fingerprint},
                                          {"same_output", res.same_output},
                                          {"output_gap", res.output_gap}});
        }
    }
    write_file(out_path, j.dump(2) + "\n");
    std::cout << "trace written to " << out_path << "\n";
    return 0;
}

int cmd_region_map(const std::string& network_path, double lo, double hi, size_t resolution,
                   size_t class_index, const std::string& out_path) {
    dtd::Network net = dtd::load_network(network_path);
    write_file(out_path, dtd::region_map_csv(net, lo, hi, resolution, class_index));
    std::cout << "raster written to " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// verify: run the built-in invariant suite on seeded networks and report
// measured gaps as machine-readable JSON.
// ---------------------------------------------------------------------------

struct VerifyCheck {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double bound = 0.0;
    std::string note;
};

VerifyCheck check_gradient_times_input(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"gradient_times_input", false, 0.0, 1e-8, "lrp0 vs grad*input, 200 inputs"};
    dtd::ExperimentConfig config = base;
    config.n_samples = 200;
    dtd::Network net = dtd::generate_network(config);
    std::vector<Vec> inputs = dtd::sample_inputs(net, config);
    double worst = 0.0;
    for (const Vec& x : inputs) {
        dtd::RelevanceTrace trace =
            dtd::relevance_train_free(net, x, config.class_index, dtd::RuleKind::lrp0());
        Vec grad = dtd::gradient(net, x, config.class_index, 1).gradient;
        Vec expected(x.size());
        for (size_t i = 0; i < x.size(); ++i) expected[i] = grad[i] * x[i];
        worst = std::max(worst, dtd::linf_diff(trace.per_layer[0], expected));
    }
    check.measured = worst;
    check.pass = worst <= check.bound;
    return check;
}

VerifyCheck check_conservation(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"conservation", false, 0.0, 1e-8, "zplus/w2/gamma layer sums, 100 inputs"};
    dtd::ExperimentConfig config = base;
    config.n_samples = 100;
    dtd::Network net = dtd::generate_network(config);
    std::vector<Vec> inputs = dtd::sample_inputs(net, config);
    double worst = 0.0;
    for (const Vec& x : inputs) {
        for (const auto& rule :
             {dtd::RuleKind::zplus(), dtd::RuleKind::w2(), dtd::RuleKind::gamma_rule(1.0)}) {
            dtd::RelevanceTrace trace =
                dtd::relevance_train_free(net, x, config.class_index, rule);
            const double top = dtd::sum(trace.per_layer.back());
            for (const auto& layer_rel : trace.per_layer) {
                worst = std::max(worst,
                                 std::fabs(dtd::sum(layer_rel) - top) / (1.0 + std::fabs(top)));
            }
        }
    }
    check.measured = worst;
    check.pass = worst <= check.bound;
    return check;
}

VerifyCheck check_constant_root(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"constroot", false, 0.0, 1e-8, "constant-root identity, 25 inputs"};
    dtd::ExperimentConfig config = base;
    config.n_samples = 25;
    dtd::Network net = dtd::generate_network(config);
    std::vector<Vec> inputs = dtd::sample_inputs(net, config);
    double worst = 0.0;
    for (const Vec& x : inputs) {
        std::vector<Vec> roots;
        dtd::ForwardTrace trace = dtd::forward(net, x);
        bool ok = true;
        for (size_t l = 1; l <= net.depth(); ++l) {
            try {
                roots.push_back(dtd::shrink_into_region(net, trace.input(l), l));
            } catch (const dtd::RootUnavailableError&) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        dtd::RootPolicy policy =
            dtd::RootPolicy::constant_per_region(dtd::single_input_root_table(net, x, roots));
        worst = std::max(worst, dtd::verify_constant_root_identity(net, x, config.class_index, policy));
    }
    check.measured = worst;
    check.pass = worst <= check.bound;
    return check;
}

dtd::TapeRootFn zplus_row_root_fn(const dtd::Network& net, size_t row);

VerifyCheck check_root_jacobian(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"rootjac", false, 0.0, 1e-4, "root-Jacobian assembly, depth-2, 10 trials"};
    double worst = 0.0;
    size_t done = 0;
    for (uint64_t trial = 0; trial < 40 && done < 10; ++trial) {
        dtd::ExperimentConfig config = base;
        config.seed = base.seed + 1000 + trial;
        config.dims = {6, 8, 5};
        config.n_samples = 1;
        dtd::Network net = dtd::generate_network(config);
        try {
            std::vector<Vec> inputs = dtd::sample_inputs(net, config);
            dtd::ForwardTrace fwd = dtd::forward(net, inputs[0]);
            size_t row = config.class_index == 0 ? 1 : 0;
            double best = -1e18;
            for (size_t m = 0; m < net.output_dim(); ++m) {
                if (m == config.class_index) continue;
                if (fwd.pre_activation(2)[m] > best) {
                    best = fwd.pre_activation(2)[m];
                    row = m;
                }
            }
            if (best <= 0.3) continue;
            const double gap =
                dtd::verify_root_jacobian_assembly(net, inputs[0], config.class_index, 2,
                                  zplus_row_root_fn(net, row));
            worst = std::max(worst, gap);
            ++done;
        } catch (const dtd::BoundaryProximityError&) {
        } catch (const dtd::RootUnavailableError&) {
        } catch (const dtd::SamplerExhaustedError&) {
        }
    }
    check.measured = worst;
    check.pass = done > 0 && worst <= check.bound;
    if (done == 0) check.note = "no admissible trial found";
    return check;
}

VerifyCheck check_higher_order(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"secondorder", false, 0.0, 1e-10,
                      "relu second-order term ~ 0; softplus term > 1e-6"};
    double relu_worst = 0.0;
    double softplus_best = 0.0;
    size_t done = 0;
    for (uint64_t trial = 0; trial < 60 && done < 10; ++trial) {
        dtd::ExperimentConfig config = base;
        config.seed = base.seed + 2000 + trial;
        config.dims = {6, 8, 4};
        config.n_samples = 1;
        dtd::Network relu_net = dtd::generate_network(config);
        dtd::ExperimentConfig soft_config = config;
        soft_config.activation = dtd::Activation::Softplus;
        dtd::Network soft_net = dtd::generate_network(soft_config);
        try {
            std::vector<Vec> inputs = dtd::sample_inputs(relu_net, config);
            const Vec& x = inputs[0];
            Vec root(x.size());
            for (size_t i = 0; i < x.size(); ++i) root[i] = x[i] * 0.98;
            relu_worst = std::max(
                relu_worst, dtd::higher_order_term(relu_net, x, config.class_index, 1, root));
            softplus_best = std::max(
                softplus_best, dtd::higher_order_term(soft_net, x, config.class_index, 1, root));
            ++done;
        } catch (const dtd::BoundaryProximityError&) {
        } catch (const dtd::SamplerExhaustedError&) {
        }
    }
    check.measured = relu_worst;
    check.pass = done > 0 && relu_worst <= check.bound && softplus_best > 1e-6;
    if (done == 0) check.note = "no admissible trial found";
    return check;
}

VerifyCheck check_forgery(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"forgery", false, 0.0, 1e-10, "arbitrary-target roots, 50 trials"};
    double worst = 0.0;
    dtd::Rng rng(base.seed + 3000);
    for (size_t trial = 0; trial < 50; ++trial) {
        const size_t d = 2 + trial % 5;
        dtd::LayerSpec layer;
        layer.weights = dtd::Matrix(1, d);
        layer.bias = {0.0};
        Vec x(d);
        for (size_t i = 0; i < d; ++i) {
            double w = rng.normal();
            while (std::fabs(w) < 0.05) w = rng.normal();
            layer.weights(0, i) = w;
            x[i] = rng.normal();
        }
        dtd::Network net({layer});
        if (dtd::forward(net, x).pre_activations[0][0] <= 0.1) continue;
        Vec target(d);
        for (double& v : target) v = rng.normal();
        if (std::fabs(dtd::sum(target)) < 1e-6) continue;
        dtd::ForgeResult forged = dtd::forge_relevance(net, x, target);
        const double ts = dtd::sum(target);
        const double as = dtd::sum(forged.achieved);
        Vec nt(d), na(d);
        for (size_t i = 0; i < d; ++i) {
            nt[i] = target[i] / ts;
            na[i] = forged.achieved[i] / as;
        }
        worst = std::max(worst, dtd::linf_diff(nt, na));
        worst = std::max(worst, std::fabs(forged.root.residual));
    }
    check.measured = worst;
    check.pass = worst <= check.bound;
    return check;
}

VerifyCheck check_class_insensitivity(const dtd::ExperimentConfig& base) {
    VerifyCheck check{"classinsens", false, 0.0, 0.999,
                      "depth-10 zplus median pairwise cosine >= bound and > lrp0"};
    dtd::ExperimentConfig config = base;
    config.dims = std::vector<size_t>(10, 20);
    config.dims.push_back(5);
    config.bias_mode = dtd::BiasMode::Unrestricted;
    config.n_samples = 1;
    config.min_output = 0.1;

    std::vector<double> zplus_cos, lrp0_cos;
    size_t done = 0;
    for (uint64_t trial = 0; trial < 40 && done < 8; ++trial) {
        config.seed = base.seed + 4000 + trial;
        dtd::Network net = dtd::generate_network(config);
        dtd::Rng rng = dtd::Rng(config.seed).fork(7);
        // Deep random nets leave some logits structurally dead; compare the
        // classes whose saliency maps are defined.
        Vec x;
        std::vector<size_t> alive;
        for (size_t attempt = 0; attempt < 300 && alive.size() < 5; ++attempt) {
            Vec candidate(net.input_dim());
            for (double& v : candidate) v = std::fabs(rng.normal());
            Vec out = dtd::forward(net, candidate).output();
            std::vector<size_t> here;
            for (size_t c = 0; c < 5; ++c) {
                if (out[c] > config.min_output) here.push_back(c);
            }
            if (here.size() > alive.size()) {
                alive = here;
                x = candidate;
            }
        }
        if (alive.size() < 2) continue;
        auto collect = [&](const dtd::RuleKind& rule, std::vector<double>& out) {
            dtd::SimilarityReport rep = dtd::class_insensitivity(net, x, rule, alive);
            for (size_t a = 0; a < alive.size(); ++a) {
                for (size_t b = a + 1; b < alive.size(); ++b) {
                    if (!std::isnan(rep.cosine(a, b))) out.push_back(rep.cosine(a, b));
                }
            }
        };
        try {
            collect(dtd::RuleKind::zplus(), zplus_cos);
            collect(dtd::RuleKind::lrp0(), lrp0_cos);
            ++done;
        } catch (const dtd::DegenerateDenominatorError&) {
        } catch (const dtd::OrthogonalDirectionError&) {
        }
    }
    auto median = [](std::vector<double> v) {
        if (v.empty()) return std::nan("");
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double mz = median(zplus_cos), ml = median(lrp0_cos);
    check.measured = mz;
    check.pass = !std::isnan(mz) && !std::isnan(ml) && mz >= check.bound && ml < mz;
    return check;
}

VerifyCheck check_bias_counterexample() {
    // b = -1: f(0) = 0 yet the gradient at the origin is zero, so the origin
    // is not in the region of any input with positive output.
    VerifyCheck check{"biascounter", false, 0.0, 0.0, "origin flagged outside the input's region"};
    dtd::LayerSpec layer;
    layer.weights = dtd::Matrix(2, 2);
    layer.weights(0, 0) = 1.0;
    layer.weights(1, 1) = 1.0;
    layer.bias = {-1.0, -1.0};
    dtd::Network net({layer});
    const Vec x = {2.0, 2.0};
    dtd::RootPoint origin;
    origin.layer = 1;
    origin.neuron = 0;
    origin.point = {0.0, 0.0};
    origin.direction = x;
    origin.t = 1.0;
    dtd::RegionCheckResult res = dtd::check_root_region(net, x, 0, origin, 1);
    check.measured = res.gradient_gap;
    check.pass = !res.same_gradient && res.gradient_gap > 0.0;
    return check;
}

int cmd_verify(const ConfigFlags& flags, const std::string& out_path, const std::string& only) {
    dtd::ExperimentConfig config = flags.resolve();
    std::vector<VerifyCheck> checks;
    auto want = [&](const std::string& name) { return only.empty() || only == name; };

    if (want("gradxinput")) checks.push_back(check_gradient_times_input(config));
    if (want("conservation")) checks.push_back(check_conservation(config));
    if (want("constroot")) checks.push_back(check_constant_root(config));
    if (want("rootjac")) checks.push_back(check_root_jacobian(config));
    if (want("secondorder")) checks.push_back(check_higher_order(config));
    if (want("forgery")) checks.push_back(check_forgery(config));
    if (want("classinsens")) checks.push_back(check_class_insensitivity(config));
    if (want("biascounter")) checks.push_back(check_bias_counterexample());
    if (checks.empty()) throw dtd::DtdError("unknown check name: '" + only + "'");

    nlohmann::json j = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& c : checks) {
        std::printf("[%s] %-14s measured=%.3e bound=%.3e  %s\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.measured, c.bound, c.note.c_str());
        j.push_back({{"name", c.name},
                     {"pass", c.pass},
                     {"measured", c.measured},
                     {"bound", c.bound},
                     {"note", c.note}});
        all_pass = all_pass && c.pass;
    }
    if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");
    return all_pass ? 0 : 1;
}

// Shared root function used by the root-Jacobian check: the z+ root of one output
// row, input-dependent through both the relevance and the direction. Callers
// pick a non-explained row so the root Jacobian term is actually exercised.
dtd::TapeRootFn zplus_row_root_fn(const dtd::Network& net, size_t row) {
    const dtd::LayerSpec& top = net.layers().back();
    const Vec w = top.weights.row(row);
    const double b = top.bias[row];
    return [w, b](dtd::ad::Tape& tape, size_t, const std::vector<dtd::ad::Value>& a) {
        std::vector<dtd::ad::Value> v(a.size());
        for (size_t i = 0; i < a.size(); ++i) {
            v[i] = w[i] >= 0.0 ? a[i] : tape.constant(0.0);
        }
        dtd::ad::Value z = tape.shift(tape.dot_const(w, a), b);
        dtd::ad::Value rel = tape.relu(z, 1.0, 0.0);
        dtd::ad::Value t = tape.div(rel, tape.dot_const(w, v));
        std::vector<dtd::ad::Value> root(a.size());
        for (size_t i = 0; i < a.size(); ++i) root[i] = tape.sub(a[i], tape.mul(t, v[i]));
        return root;
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep Taylor Decomposition rules, root points, and assumption audits"};
    app.require_subcommand(1);

    ConfigFlags gen_flags, table_flags, verify_flags;
    std::string gen_out, table_out = "audit.csv", verify_out, verify_only;

    auto* gen = app.add_subcommand("gen-net", "generate a seeded random network");
    gen_flags.attach(gen);
    gen->add_option("--out", gen_out, "output network JSON")->required();

    auto* table = app.add_subcommand("audit", "root-region audit over sampled inputs");
    table_flags.attach(table);
    table->add_option("--out", table_out, "output CSV path");

    std::string exp_net, exp_input, exp_rule = "zplus", exp_out = "trace.json";
    long long exp_seed = -1, exp_class = 0;
    double exp_min_out = 0.0;
    bool exp_check_roots = false, exp_recursive = false;
    auto* explain = app.add_subcommand("explain", "relevance trace for one input");
    explain->add_option("--network", exp_net, "network JSON path")->required();
    explain->add_option("--input", exp_input, "comma-separated input vector");
    explain->add_option("--input-seed", exp_seed, "seed for a standard-normal input");
    explain->add_option("--input-min-output", exp_min_out,
                        "with --input-seed: reject inputs until the explained logit exceeds this");
    explain->add_option("--rule", exp_rule, "propagation rule");
    explain->add_option("--class", exp_class, "explained output index");
    explain->add_option("--out", exp_out, "output trace JSON");
    explain->add_flag("--check-roots", exp_check_roots, "append per-root region checks");
    explain->add_flag("--recursive", exp_recursive, "use the recursive algorithm");

    std::string map_net, map_out = "regions.csv";
    double map_lo = -2.0, map_hi = 2.0;
    long long map_res = 100, map_class = 0;
    auto* region_cmd = app.add_subcommand("region-map", "rasterize linear regions of a 2-input net");
    region_cmd->add_option("--network", map_net, "network JSON path")->required();
    region_cmd->add_option("--lo", map_lo, "lower bound of the square");
    region_cmd->add_option("--hi", map_hi, "upper bound of the square");
    region_cmd->add_option("--resolution", map_res, "cells per axis");
    region_cmd->add_option("--class", map_class, "explained output index");
    region_cmd->add_option("--out", map_out, "output CSV path");

    auto* verify = app.add_subcommand("verify", "run the invariant suite");
    verify_flags.attach(verify);
    verify->add_option("--out", verify_out, "output JSON path");
    verify->add_option("--only", verify_only, "run a single named check");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_net(gen_flags, gen_out);
        if (table->parsed()) return cmd_audit(table_flags, table_out);
        if (explain->parsed()) {
            return cmd_explain(exp_net, exp_input, exp_seed, exp_min_out, exp_rule,
                               static_cast<size_t>(exp_class), exp_out, exp_check_roots,
                               exp_recursive);
        }
        if (region_cmd->parsed()) {
            return cmd_region_map(map_net, map_lo, map_hi, static_cast<size_t>(map_res),
                                  static_cast<size_t>(map_class), map_out);
        }
        if (verify->parsed()) return cmd_verify(verify_flags, verify_out, verify_only);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
