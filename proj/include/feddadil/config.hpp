#pragma once

// Run configuration files.
//
// Grammar, one item per line:
//   [section]          starts a section
//   key = value        assigns a setting in the current section
//   # ... or ; ...     comment (whole line)
// Blank lines are ignored. Every key must belong to a known section; unknown
// keys, duplicate keys and out-of-range values are errors that name the key.
// Lists are comma separated; translation vectors are separated by ';'.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "feddadil/experiment.hpp"

namespace feddadil {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);

/// Name the target domain carries in the data file.
std::string target_domain_name(const ExperimentConfig& cfg);

}  // namespace feddadil
