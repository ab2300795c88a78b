#pragma once

#include "halbach/common.hpp"
#include "halbach/harness.hpp"
#include "halbach/prior.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace halbach {

enum class InferenceMode { linear, pcn };
enum class ObservableChoice { field, fourier };
enum class NoiseProfileKind { uniform, fringe };

/// Everything a CLI run needs besides the seed. Harness parameters live in
/// `validation`; the remaining fields select inputs and the inference path.
struct RunConfig {
  ValidationConfig validation;
  int model_dimension = 3;  // 2: single-ring cross-section, 3: full array
  ObservableChoice observable = ObservableChoice::field;
  NoiseProfileKind noise_profile = NoiseProfileKind::uniform;
  std::string prior_csv;  // empty: synthetic prior
  InferenceMode mode = InferenceMode::linear;
  int n_chains = 1;
  std::string iron_curve = "brauer";  // "brauer", "linear" or a CSV path
  double iron_mu_r = 1000.0;          // for iron_curve = "linear"
};

/// Parses TOML text. Unknown tables or keys, wrong types and out-of-range
/// values raise ConfigError naming the key and `source`.
RunConfig parse_run_config(std::string_view toml_text, const std::string& source = "config");
/// Reads and parses a TOML file; a missing file is a ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks cross-field consistency (radii, counts, ranges).
void validate_run_config(const RunConfig& config);

/// Fully resolved TOML that parses back to an identical configuration.
std::string run_config_to_toml(const RunConfig& config);

/// The iron curve selected by the configuration.
fem::HBCurve iron_curve(const RunConfig& config);

std::string to_string(InferenceMode mode);
std::string to_string(ObservableChoice observable);

}  // namespace halbach
