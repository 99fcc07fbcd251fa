#pragma once

#include <map>
#include <string>

#include "adgen/denoiser.hpp"
#include "adgen/scheduler.hpp"
#include "adgen/training.hpp"

namespace adgen {

struct ScheduleParams {
    int num_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

// Flat-section key=value document covering every component. Flags override
// file values; the effective config is echoed into output directories.
struct RunConfig {
    DenoiserConfig denoiser;
    train::TrainConfig train;
    ScheduleParams schedule;
    TDWConfig tdw;
    SamplerConfig sampler;

    void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Raw section/key access used for flag overrides: set_value(cfg_text_map,...)
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;
ConfigMap parse_ini(const std::string& text);
std::string serialize_ini(const ConfigMap& m);
RunConfig config_from_map(const ConfigMap& m);
ConfigMap config_to_map(const RunConfig& cfg);

}  // namespace adgen
