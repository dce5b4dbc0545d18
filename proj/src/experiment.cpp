#include "dtd/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dtd {

std::string bias_mode_name(BiasMode mode) {
    return mode == BiasMode::NonPositive ? "nonpositive" : "unrestricted";
}

BiasMode bias_mode_from_name(const std::string& name) {
    if (name == "nonpositive") return BiasMode::NonPositive;
    if (name == "unrestricted") return BiasMode::Unrestricted;
    throw DtdError("unknown bias mode: '" + name + "' (nonpositive|unrestricted)");
}

std::string init_scale_name(InitScale scale) {
    return scale == InitScale::FanIn ? "fan_in" : "unit";
}

InitScale init_scale_from_name(const std::string& name) {
    if (name == "fan_in") return InitScale::FanIn;
    if (name == "unit") return InitScale::Unit;
    throw DtdError("unknown init scale: '" + name + "' (fan_in|unit)");
}

void ExperimentConfig::validate() const {
    if (dims.size() < 2) throw DtdError("config: dims needs at least two entries");
    for (size_t d : dims) {
        if (d == 0) throw DtdError("config: zero layer width");
    }
    if (n_samples < 1) throw DtdError("config: n_samples must be >= 1");
    if (min_output < 0.0) throw DtdError("config: min_output must be >= 0");
    if (!(tolerances.gradient > 0.0) || !(tolerances.output > 0.0) ||
        !(tolerances.fd_step > 0.0)) {
        throw DtdError("config: tolerances must be positive");
    }
    if (class_index >= dims.back()) throw DtdError("config: class index out of range");
    if (rules.empty()) throw DtdError("config: rule list must not be empty");
}

using nlohmann::json;

std::string config_to_json(const ExperimentConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["dims"] = config.dims;
    j["bias_mode"] = bias_mode_name(config.bias_mode);
    std::vector<std::string> rule_names;
    for (const auto& r : config.rules) rule_names.push_back(rule_name(r));
    j["rules"] = rule_names;
    j["n_samples"] = config.n_samples;
    j["min_output"] = config.min_output;
    j["class_index"] = config.class_index;
    j["tolerances"] = {{"gradient", config.tolerances.gradient},
                       {"output", config.tolerances.output},
                       {"fd_step", config.tolerances.fd_step}};
    j["activation"] = activation_name(config.activation);
    j["init_scale"] = init_scale_name(config.init_scale);
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    ExperimentConfig config;
    if (j.contains("seed")) config.seed = j["seed"].get<uint64_t>();
    if (j.contains("dims")) config.dims = j["dims"].get<std::vector<size_t>>();
    if (j.contains("bias_mode")) {
        config.bias_mode = bias_mode_from_name(j["bias_mode"].get<std::string>());
    }
    if (j.contains("rules")) {
        config.rules.clear();
        for (const auto& name : j["rules"]) config.rules.push_back(parse_rule(name));
    }
    if (j.contains("n_samples")) config.n_samples = j["n_samples"].get<size_t>();
    if (j.contains("min_output")) config.min_output = j["min_output"].get<double>();
    if (j.contains("class_index")) config.class_index = j["class_index"].get<size_t>();
    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        if (t.contains("gradient")) config.tolerances.gradient = t["gradient"].get<double>();
        if (t.contains("output")) config.tolerances.output = t["output"].get<double>();
        if (t.contains("fd_step")) config.tolerances.fd_step = t["fd_step"].get<double>();
    }
    if (j.contains("activation")) {
        config.activation = activation_from_name(j["activation"].get<std::string>());
    }
    if (j.contains("init_scale")) {
        config.init_scale = init_scale_from_name(j["init_scale"].get<std::string>());
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DtdError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

Network generate_network(const ExperimentConfig& config) {
    config.validate();
    Rng rng(config.seed);
    std::vector<LayerSpec> layers;
    for (size_t l = 0; l + 1 < config.dims.size(); ++l) {
        const size_t fan_in = config.dims[l];
        const size_t fan_out = config.dims[l + 1];
        const double scale = config.init_scale == InitScale::FanIn
                                 ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                 : 1.0;
        LayerSpec layer;
        layer.activation = config.activation;
        layer.weights = Matrix(fan_out, fan_in);
        for (size_t i = 0; i < fan_out; ++i) {
            for (size_t j = 0; j < fan_in; ++j) layer.weights(i, j) = rng.normal() * scale;
        }
        layer.bias.resize(fan_out);
        for (size_t i = 0; i < fan_out; ++i) {
            double b = rng.normal() * scale;
            if (config.bias_mode == BiasMode::NonPositive) b = -std::fabs(b);
            layer.bias[i] = b;
        }
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

std::vector<Vec> sample_inputs(const Network& net, const ExperimentConfig& config) {
    config.validate();
    Rng rng = Rng(config.seed).fork(0x5a4d);
    return rejection_sample_inputs(net, config.n_samples, config.min_output, config.class_index,
                                   rng);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Trim to the shortest representation that round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::strtod(probe, nullptr) == v) return probe;
    }
    return buf;
}

std::string region_audit_csv(const std::vector<RegionAuditReport>& reports,
                              const ExperimentConfig& config) {
    std::string out;
    out += std::string("# weights=normal(0,1)") +
           (config.init_scale == InitScale::FanIn ? "/sqrt(fan_in)" : "") +
           " bias_mode=" + bias_mode_name(config.bias_mode) +
           " init=" + init_scale_name(config.init_scale) +
           " sampling=stdnormal-reject min_output=" + format_double(config.min_output) +
           " class=" + std::to_string(config.class_index) + "\n";
    out += "rule,samples,frac_same_region,frac_same_output,seed\n";
    for (const auto& r : reports) {
        out += rule_name(r.rule) + "," + std::to_string(r.samples) + "," +
               format_double(r.frac_same_region) + "," + format_double(r.frac_same_output) + "," +
               std::to_string(r.seed) + "\n";
    }
    return out;
}

std::string region_map_csv(const Network& net, double lo, double hi, size_t resolution,
                           size_t class_index) {
    if (net.input_dim() != 2) throw DtdError("region map requires a 2-input network");
    if (resolution == 0) throw DtdError("region map resolution must be positive");
    if (!(hi > lo)) throw DtdError("region map bounds must satisfy lo < hi");

    std::string out = "x,y,region_id,grad_x,grad_y\n";
    const double cell = (hi - lo) / static_cast<double>(resolution);
    for (size_t iy = 0; iy < resolution; ++iy) {
        for (size_t ix = 0; ix < resolution; ++ix) {
            const double px = lo + (static_cast<double>(ix) + 0.5) * cell;
            const double py = lo + (static_cast<double>(iy) + 0.5) * cell;
            const Vec point = {px, py};
            ForwardTrace trace = forward(net, point);
            const uint64_t region = fingerprint(trace, 1).hash();
            const Vec grad = gradient(net, point, class_index, 1).gradient;
            out += format_double(px) + "," + format_double(py) + "," + std::to_string(region) +
                   "," + format_double(grad[0]) + "," + format_double(grad[1]) + "\n";
        }
    }
    return out;
}

}  // namespace dtd
