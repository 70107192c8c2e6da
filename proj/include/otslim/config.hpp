#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "otslim/compress.hpp"
#include "otslim/datasets.hpp"
#include "otslim/train.hpp"

namespace otslim {

// Configuration problems (syntax, unknown keys, bad values) — the CLI maps
// these to its config-error exit code, everything else to the runtime one.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompressSettings {
  double delta = 0.02;
  std::optional<double> epsilon;  // set = one-shot threshold mode, no budget
  int heal_epochs = 0;            // post-removal fine-tuning without the regularizer
};

// Swept axes (empty = not swept) plus the seed list medians are taken over.
struct SweepSettings {
  std::vector<double> lambdas;
  std::vector<int> n_projs;
  std::vector<int> batch_sizes;
  std::vector<Distance> distances;
  std::vector<SeedMode> seed_modes;
  std::vector<std::uint64_t> seeds;

  int axis_count() const;
  bool any() const { return axis_count() > 0 || !seeds.empty(); }
};

struct OutputSettings {
  std::string report = "report.json";
  std::string plot = "plot.csv";
  std::string checkpoint = "model.ckpt";
  std::string aggregate = "ablate.csv";
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<int> widths{16, 16, 16, 16, 16, 16};
  TrainConfig train;
  CompressSettings compress;
  SweepSettings sweep;
  OutputSettings outputs;

  void validate() const;
};

// Flat `key = value` text: one pair per line, '#' comments, blank lines
// allowed, duplicate keys rejected. This is the exchange form every config
// consumer works through.
using KeyValues = std::map<std::string, std::string>;

// Syntax layer: splits lines into pairs with line numbers in error messages.
KeyValues parse_key_values(const std::string& text);

// Semantic layer: builds a validated config. Requires format_version = 1 and
// rejects unknown keys and out-of-range values.
ExperimentConfig config_from_keys(const KeyValues& kv);

// Canonical serialization; config_from_keys(config_to_keys(c)) == c.
KeyValues config_to_keys(const ExperimentConfig& config);

// Reads, parses, and validates a config file.
ExperimentConfig load_config(const std::string& path);

// Shortest decimal string that parses back to exactly x.
std::string format_double(double x);

// Enum name helpers shared by config, reports, and the CLI.
std::string to_string(DatasetKind kind);
std::string to_string(Distance distance);
std::string to_string(MaxMode mode);
std::string to_string(DirectionRefresh refresh);
std::string to_string(const SeedMode& mode);

}  // namespace otslim
