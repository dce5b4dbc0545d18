// Seeded network/input generation, experiment configuration, and report
// serialization for the CLI front end.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtd/diagnostics.hpp"
#include "dtd/network.hpp"
#include "dtd/rng.hpp"
#include "dtd/rules.hpp"

namespace dtd {

enum class BiasMode { NonPositive, Unrestricted };

std::string bias_mode_name(BiasMode mode);
BiasMode bias_mode_from_name(const std::string& name);

// Weight/bias draw scale. FanIn divides N(0,1) draws by sqrt(fan_in) and
// keeps deep stacks well-conditioned; Unit leaves them unscaled, which is the
// regime where the root-region audit reproduces the reported fractions.
enum class InitScale { FanIn, Unit };

std::string init_scale_name(InitScale scale);
InitScale init_scale_from_name(const std::string& name);

struct Tolerances {
    double gradient = 1e-6;
    double output = 1e-9;
    double fd_step = 1e-4;
};

struct ExperimentConfig {
    uint64_t seed = 2;
    std::vector<size_t> dims = {10, 10, 10, 10};  // layer widths d_1..d_{n+1}
    BiasMode bias_mode = BiasMode::NonPositive;
    std::vector<RuleKind> rules = {RuleKind::lrp0(), RuleKind::gamma_rule(1.0), RuleKind::w2(),
                                   RuleKind::zplus()};
    size_t n_samples = 1000;
    double min_output = 0.1;
    size_t class_index = 0;
    Tolerances tolerances;
    Activation activation = Activation::ReLU;
    InitScale init_scale = InitScale::FanIn;

    void validate() const;
};

std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Weights i.i.d. N(0,1)/sqrt(fan_in); biases drawn the same way, then
// negated-absolute under NonPositive mode. Deterministic per seed.
Network generate_network(const ExperimentConfig& config);

// Standard-normal inputs accepted while f_xi(x) > min_output (rejection
// sampling; SamplerExhaustedError after 100 * n_samples draws).
std::vector<Vec> sample_inputs(const Network& net, const ExperimentConfig& config);

// CSV with a '#' metadata line, a header row, one row per rule. LF newlines,
// '.' decimal separator; byte-stable for a given config.
std::string region_audit_csv(const std::vector<RegionAuditReport>& reports,
                              const ExperimentConfig& config);

// x,y,region_id,grad_x,grad_y raster of a 2-input network over [lo, hi]^2.
std::string region_map_csv(const Network& net, double lo, double hi, size_t resolution,
                           size_t class_index);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace dtd
