#pragma once

// Flat TOML-style run configuration: `key = value` lines, `#` comments,
// optional `[section]` headers that prefix following keys with "section.".
// Values are quoted strings, numbers or true/false.

#include "gwa/harness/trainer.hpp"

#include <map>
#include <string>

namespace gwa::harness {

struct RunConfig {
    TrainerConfig trainer;
    std::string out_dir = "gwa-run";
    bool per_sample = true;
};

/// Raw key/value pairs. Throws ConfigError on malformed lines or duplicates.
std::map<std::string, std::string> parse_flat_config(const std::string& text);

/// Throws ConfigError for unknown keys or bad values.
RunConfig run_config_from_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

} // namespace gwa::harness
