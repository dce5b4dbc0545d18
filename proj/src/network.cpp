#include "dtd/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dtd {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "softplus") return Activation::Softplus;
    if (name == "identity") return Activation::Identity;
    throw DtdError("unknown activation: '" + name + "'");
}

void LayerSpec::validate() const {
    if (weights.rows == 0 || weights.cols == 0) throw ShapeError("layer has empty weights");
    if (bias.size() != weights.rows) {
        throw ShapeError("bias length " + std::to_string(bias.size()) +
                         " does not match weight rows " + std::to_string(weights.rows));
    }
    for (double w : weights.data) {
        if (!std::isfinite(w)) throw DtdError("non-finite weight entry");
    }
    if (!all_finite(bias)) throw DtdError("non-finite bias entry");
    if (activation == Activation::Softplus && !(softplus_beta > 0.0)) {
        throw DtdError("softplus beta must be positive");
    }
}

double LayerSpec::activate(double z) const {
    switch (activation) {
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Identity: return z;
        case Activation::Softplus: {
            const double t = softplus_beta * z;
            if (t > 30.0) return z + std::log1p(std::exp(-t)) / softplus_beta;
            return std::log1p(std::exp(t)) / softplus_beta;
        }
    }
    return z;
}

double LayerSpec::activate_deriv(double z) const {
    switch (activation) {
        case Activation::ReLU: return z >= 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
        case Activation::Softplus: return 1.0 / (1.0 + std::exp(-softplus_beta * z));
    }
    return 1.0;
}

Network::Network(std::vector<LayerSpec> layers, NetworkLimits limits)
    : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    if (layers_.size() > limits.max_depth) {
        throw ShapeError("network depth exceeds limit of " + std::to_string(limits.max_depth));
    }
    for (size_t l = 0; l < layers_.size(); ++l) {
        layers_[l].validate();
        if (layers_[l].in_dim() > limits.max_width || layers_[l].out_dim() > limits.max_width) {
            throw ShapeError("layer width exceeds limit of " + std::to_string(limits.max_width));
        }
        if (l + 1 < layers_.size() && layers_[l].out_dim() != layers_[l + 1].in_dim()) {
            throw ShapeError("layer " + std::to_string(l + 1) + " output dim " +
                             std::to_string(layers_[l].out_dim()) + " does not chain into layer " +
                             std::to_string(l + 2));
        }
    }
}

size_t Network::dim(size_t l) const {
    if (l < 1 || l > depth() + 1) throw ShapeError("layer index out of range");
    return l <= depth() ? layers_[l - 1].in_dim() : layers_.back().out_dim();
}

bool Network::is_relu_only() const {
    for (const auto& l : layers_) {
        if (l.activation == Activation::Softplus) return false;
    }
    return true;
}

ForwardTrace forward(const Network& net, const Vec& x) {
    if (x.size() != net.input_dim()) {
        throw ShapeError("input length " + std::to_string(x.size()) + " != input_dim " +
                         std::to_string(net.input_dim()));
    }
    if (!all_finite(x)) throw DtdError("non-finite input entry");

    ForwardTrace trace;
    trace.inputs.push_back(x);
    for (const auto& layer : net.layers()) {
        Vec z = matvec(layer.weights, trace.inputs.back());
        for (size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        Mask m(z.size());
        Vec a(z.size());
        for (size_t i = 0; i < z.size(); ++i) {
            a[i] = layer.activate(z[i]);
            m[i] = layer.activation == Activation::ReLU ? (z[i] >= 0.0 ? 1 : 0) : 1;
        }
        trace.pre_activations.push_back(std::move(z));
        trace.masks.push_back(std::move(m));
        trace.inputs.push_back(std::move(a));
    }
    return trace;
}

ForwardTrace forward_suffix(const Network& net, const Vec& a_l, size_t from_layer) {
    if (from_layer < 1 || from_layer > net.depth()) throw ShapeError("from_layer out of range");
    if (a_l.size() != net.dim(from_layer)) throw ShapeError("suffix input dim mismatch");

    ForwardTrace trace;
    trace.inputs.push_back(a_l);
    for (size_t l = from_layer - 1; l < net.depth(); ++l) {
        const auto& layer = net.layer(l);
        Vec z = matvec(layer.weights, trace.inputs.back());
        for (size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        Mask m(z.size());
        Vec a(z.size());
        for (size_t i = 0; i < z.size(); ++i) {
            a[i] = layer.activate(z[i]);
            m[i] = layer.activation == Activation::ReLU ? (z[i] >= 0.0 ? 1 : 0) : 1;
        }
        trace.pre_activations.push_back(std::move(z));
        trace.masks.push_back(std::move(m));
        trace.inputs.push_back(std::move(a));
    }
    return trace;
}

namespace {

// ReLU derivative with the requested hinge resolution at suffix position k.
double relu_deriv_at(double z, size_t k, size_t i, const SuffixEvalOptions& opts) {
    double tol = 0.0;
    if (opts.hinge != HingePolicy::Exact) {
        double ref_scale = 1.0;
        if (opts.ref_pre_acts && k < opts.ref_pre_acts->size()) {
            ref_scale = 1.0 + std::fabs((*opts.ref_pre_acts)[k][i]);
        }
        tol = opts.tie_tol * ref_scale;
    }
    if (z > tol) return 1.0;
    if (z < -tol) return 0.0;
    switch (opts.hinge) {
        case HingePolicy::Exact: return z >= 0.0 ? 1.0 : 0.0;
        case HingePolicy::ActiveTies: return 1.0;
        case HingePolicy::RefMasks:
            if (opts.ref_masks && k < opts.ref_masks->size()) {
                return (*opts.ref_masks)[k][i] ? 1.0 : 0.0;
            }
            return 1.0;
    }
    return 1.0;
}

}  // namespace

GradientResult suffix_gradient(const Network& net, const Vec& a_l, size_t from_layer,
                               size_t class_index, const SuffixEvalOptions& opts) {
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");
    ForwardTrace trace = forward_suffix(net, a_l, from_layer);

    const size_t n_suffix = trace.pre_activations.size();
    Vec g(net.output_dim(), 0.0);
    g[class_index] = 1.0;
    for (size_t k = n_suffix; k-- > 0;) {
        const auto& layer = net.layer(from_layer - 1 + k);
        const Vec& z = trace.pre_activations[k];
        for (size_t i = 0; i < g.size(); ++i) {
            const double d = layer.activation == Activation::ReLU
                                 ? relu_deriv_at(z[i], k, i, opts)
                                 : layer.activate_deriv(z[i]);
            g[i] *= d;
        }
        g = matTvec(layer.weights, g);
    }

    GradientResult result;
    result.value = trace.output()[class_index];
    result.gradient = std::move(g);
    result.class_index = class_index;
    return result;
}

GradientResult gradient(const Network& net, const Vec& x, size_t class_index,
                        size_t wrt_layer) {
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");
    if (wrt_layer < 1 || wrt_layer > net.depth() + 1) throw ShapeError("wrt_layer out of range");

    ForwardTrace trace = forward(net, x);
    if (wrt_layer == net.depth() + 1) {
        GradientResult result;
        result.value = trace.output()[class_index];
        result.gradient.assign(net.output_dim(), 0.0);
        result.gradient[class_index] = 1.0;
        result.class_index = class_index;
        return result;
    }
    GradientResult result = suffix_gradient(net, trace.input(wrt_layer), wrt_layer, class_index);
    result.value = trace.output()[class_index];
    return result;
}

RegionFingerprint fingerprint(const ForwardTrace& trace, size_t from_layer) {
    if (from_layer < 1 || from_layer > trace.masks.size()) {
        throw ShapeError("from_layer out of range for fingerprint");
    }
    RegionFingerprint fp;
    fp.from_layer = from_layer;
    fp.patterns.assign(trace.masks.begin() + static_cast<long>(from_layer - 1),
                       trace.masks.end());
    return fp;
}

RegionFingerprint suffix_fingerprint(const Network& net, const Vec& a_l, size_t from_layer,
                                     const SuffixEvalOptions& opts) {
    ForwardTrace trace = forward_suffix(net, a_l, from_layer);
    RegionFingerprint fp;
    fp.from_layer = from_layer;
    for (size_t k = 0; k < trace.pre_activations.size(); ++k) {
        const auto& layer = net.layer(from_layer - 1 + k);
        const Vec& z = trace.pre_activations[k];
        Mask m(z.size());
        for (size_t i = 0; i < z.size(); ++i) {
            if (layer.activation == Activation::ReLU) {
                m[i] = relu_deriv_at(z[i], k, i, opts) > 0.5 ? 1 : 0;
            } else {
                m[i] = 1;
            }
        }
        fp.patterns.push_back(std::move(m));
    }
    return fp;
}

Vec finite_difference_gradient(const Network& net, const Vec& x, size_t class_index,
                               double step) {
    if (!(step > 0.0)) throw DtdError("finite-difference step must be positive");
    if (class_index >= net.output_dim()) throw ClassIndexError("class index out of range");
    Vec g(x.size());
    Vec probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double fp = forward(net, probe).output()[class_index];
        probe[i] = x[i] - step;
        const double fm = forward(net, probe).output()[class_index];
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// --- serialization ----------------------------------------------------------

using nlohmann::json;

std::string network_to_json(const Network& net) {
    json j;
    j["input_dim"] = net.input_dim();
    j["layers"] = json::array();
    for (const auto& layer : net.layers()) {
        json jl;
        jl["weights"] = json::array();
        for (size_t i = 0; i < layer.weights.rows; ++i) {
            jl["weights"].push_back(layer.weights.row(i));
        }
        jl["bias"] = layer.bias;
        jl["activation"] = activation_name(layer.activation);
        if (layer.activation == Activation::Softplus) jl["beta"] = layer.softplus_beta;
        j["layers"].push_back(std::move(jl));
    }
    return j.dump(2);
}

Network network_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty()) {
        throw DtdError("network json: missing or empty 'layers'");
    }
    std::vector<LayerSpec> layers;
    for (const auto& jl : j["layers"]) {
        LayerSpec layer;
        const auto& w = jl.at("weights");
        if (!w.is_array() || w.empty()) throw DtdError("network json: bad weights");
        const size_t rows = w.size();
        const size_t cols = w[0].size();
        layer.weights = Matrix(rows, cols);
        for (size_t i = 0; i < rows; ++i) {
            if (w[i].size() != cols) throw DtdError("network json: ragged weight rows");
            for (size_t k = 0; k < cols; ++k) layer.weights(i, k) = w[i][k].get<double>();
        }
        layer.bias = jl.at("bias").get<Vec>();
        layer.activation = activation_from_name(jl.at("activation").get<std::string>());
        if (jl.contains("beta")) layer.softplus_beta = jl["beta"].get<double>();
        layers.push_back(std::move(layer));
    }
    Network net(std::move(layers));
    if (j.contains("input_dim") && j["input_dim"].get<size_t>() != net.input_dim()) {
        throw DtdError("network json: input_dim does not match first layer");
    }
    return net;
}

Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DtdError("cannot open network file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json(ss.str());
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DtdError("cannot write network file: " + path);
    out << network_to_json(net) << "\n";
}

}  // namespace dtd
