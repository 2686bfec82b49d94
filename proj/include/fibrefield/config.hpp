#pragma once

// Flat `key = value` configuration with `#` comments. Unknown keys, bad values
// and duplicates are rejected with the offending line number.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "fibrefield/sampler.hpp"
#include "fibrefield/synthetic.hpp"

namespace fibrefield {

struct RunConfig {
    ScenarioConfig scenario;  // window, hyperparameters and simulation settings
    SamplerSettings sampler;
    double t_end = 6000;
    std::optional<double> burn_in;
    std::uint64_t seed = 1;
    double density_bandwidth = 3;
    double density_spacing = 1;
    double cluster_threshold = 0.5;
    bool has_window = false;

    const WindowRect& window() const { return scenario.window; }
    /// Throws Config unless all four window keys were given.
    void require_window() const;
    void validate() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Every key with its resolved value, in parseable form.
void write_effective_config(std::ostream& out, const RunConfig& cfg);

} // namespace fibrefield
