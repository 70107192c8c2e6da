#include "otslim/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace otslim {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty item in list '" + value + "'");
    items.push_back(item);
  }
  if (items.empty()) throw ConfigError("empty list");
  return items;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("key '" + key + "': cannot read '" + value + "' (expected " +
                    expected + ")");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used == value.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "a finite number");
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(value, &used);
    if (used == value.size()) return x;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "an integer");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(value, &used);
    if (used == value.size() && value[0] != '-') return x;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "an unsigned integer");
}

DatasetKind parse_dataset_kind(const std::string& key, const std::string& value) {
  if (value == "blobs") return DatasetKind::Blobs;
  if (value == "rings") return DatasetKind::Rings;
  if (value == "xor") return DatasetKind::Xor;
  if (value == "csv") return DatasetKind::CsvFile;
  bad_value(key, value, "blobs|rings|xor|csv");
}

Distance parse_distance(const std::string& key, const std::string& value) {
  if (value == "max_sliced") return Distance::MaxSliced;
  if (value == "sliced") return Distance::Sliced;
  if (value == "mean_l1") return Distance::MeanL1;
  if (value == "mean_l2") return Distance::MeanL2;
  if (value == "mmd") return Distance::Mmd;
  if (value == "kl_diag_gaussian") return Distance::KlDiagGaussian;
  bad_value(key, value, "max_sliced|sliced|mean_l1|mean_l2|mmd|kl_diag_gaussian");
}

MaxMode parse_max_mode(const std::string& key, const std::string& value) {
  if (value == "random_search") return MaxMode::RandomSearch;
  if (value == "projected_ascent") return MaxMode::ProjectedAscent;
  bad_value(key, value, "random_search|projected_ascent");
}

DirectionRefresh parse_refresh(const std::string& key, const std::string& value) {
  if (value == "per_minibatch") return DirectionRefresh::PerMinibatch;
  if (value == "per_epoch") return DirectionRefresh::PerEpoch;
  bad_value(key, value, "per_minibatch|per_epoch");
}

SeedMode parse_seed_mode(const std::string& key, const std::string& value) {
  if (value == "unseeded") return SeedMode::Unseeded();
  if (value.rfind("seeded:", 0) == 0)
    return SeedMode::Seeded(parse_u64(key, value.substr(7)));
  bad_value(key, value, "unseeded|seeded:<integer>");
}

}  // namespace

int SweepSettings::axis_count() const {
  int axes = 0;
  if (!lambdas.empty()) ++axes;
  if (!n_projs.empty()) ++axes;
  if (!batch_sizes.empty()) ++axes;
  if (!distances.empty()) ++axes;
  if (!seed_modes.empty()) ++axes;
  return axes;
}

void ExperimentConfig::validate() const {
  try {
    dataset.validate();
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (widths.empty()) throw ConfigError("net.widths must list at least one width");
  for (int w : widths)
    if (w < 1) throw ConfigError("net.widths entries must be positive");
  if (compress.delta < 0.0) throw ConfigError("compress.delta must be non-negative");
  if (compress.epsilon && *compress.epsilon < 0.0)
    throw ConfigError("compress.epsilon must be non-negative");
  if (compress.heal_epochs < 0)
    throw ConfigError("compress.heal_epochs must be non-negative");
  if (outputs.report.empty() || outputs.plot.empty() || outputs.checkpoint.empty() ||
      outputs.aggregate.empty())
    throw ConfigError("output paths must be non-empty");
  if (sweep.axis_count() > 2)
    throw ConfigError("at most two swept axes are supported");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (kv.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        key + "'");
    kv[key] = value;
  }
  return kv;
}

ExperimentConfig config_from_keys(const KeyValues& kv) {
  const auto version = kv.find("format_version");
  if (version == kv.end()) throw ConfigError("missing required key 'format_version'");
  if (version->second != "1")
    throw ConfigError("unsupported format_version '" + version->second + "'");

  ExperimentConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "format_version") {
    } else if (key == "dataset.kind") {
      cfg.dataset.kind = parse_dataset_kind(key, value);
    } else if (key == "dataset.n_samples") {
      cfg.dataset.n_samples = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.n_classes") {
      cfg.dataset.n_classes = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.input_dim") {
      cfg.dataset.input_dim = static_cast<int>(parse_int(key, value));
    } else if (key == "dataset.noise") {
      cfg.dataset.noise = parse_double(key, value);
    } else if (key == "dataset.split") {
      const auto parts = split_list(value);
      if (parts.size() != 3)
        bad_value(key, value, "three comma-separated fractions");
      for (std::size_t i = 0; i < 3; ++i)
        cfg.dataset.split[i] = parse_double(key, parts[i]);
    } else if (key == "dataset.seed") {
      cfg.dataset.seed = parse_u64(key, value);
    } else if (key == "dataset.csv_path") {
      cfg.dataset.csv_path = value;
    } else if (key == "net.widths") {
      cfg.widths.clear();
      for (const std::string& item : split_list(value))
        cfg.widths.push_back(static_cast<int>(parse_int(key, item)));
    } else if (key == "train.lambda") {
      cfg.train.lambda = parse_double(key, value);
    } else if (key == "train.distance") {
      cfg.train.distance = parse_distance(key, value);
    } else if (key == "train.p") {
      cfg.train.distance_cfg.p = parse_double(key, value);
    } else if (key == "train.n_proj") {
      cfg.train.distance_cfg.n_proj = static_cast<int>(parse_int(key, value));
    } else if (key == "train.max_mode") {
      cfg.train.distance_cfg.max_mode = parse_max_mode(key, value);
    } else if (key == "train.seed_mode") {
      cfg.train.distance_cfg.seed_mode = parse_seed_mode(key, value);
    } else if (key == "train.epochs") {
      cfg.train.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "train.batch_size") {
      cfg.train.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "train.learning_rate") {
      cfg.train.learning_rate = parse_double(key, value);
    } else if (key == "train.momentum") {
      cfg.train.momentum = parse_double(key, value);
    } else if (key == "train.seed") {
      cfg.train.seed = parse_u64(key, value);
    } else if (key == "train.refresh") {
      cfg.train.refresh = parse_refresh(key, value);
    } else if (key == "train.mmd_bandwidth") {
      if (value == "median")
        cfg.train.mmd_bandwidth.reset();
      else
        cfg.train.mmd_bandwidth = parse_double(key, value);
    } else if (key == "compress.delta") {
      cfg.compress.delta = parse_double(key, value);
    } else if (key == "compress.epsilon") {
      if (value == "off")
        cfg.compress.epsilon.reset();
      else
        cfg.compress.epsilon = parse_double(key, value);
    } else if (key == "compress.heal_epochs") {
      cfg.compress.heal_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "sweep.lambda") {
      for (const std::string& item : split_list(value))
        cfg.sweep.lambdas.push_back(parse_double(key, item));
    } else if (key == "sweep.n_proj") {
      for (const std::string& item : split_list(value))
        cfg.sweep.n_projs.push_back(static_cast<int>(parse_int(key, item)));
    } else if (key == "sweep.batch_size") {
      for (const std::string& item : split_list(value))
        cfg.sweep.batch_sizes.push_back(static_cast<int>(parse_int(key, item)));
    } else if (key == "sweep.distance") {
      for (const std::string& item : split_list(value))
        cfg.sweep.distances.push_back(parse_distance(key, item));
    } else if (key == "sweep.seed_mode") {
      for (const std::string& item : split_list(value))
        cfg.sweep.seed_modes.push_back(parse_seed_mode(key, item));
    } else if (key == "sweep.seeds") {
      for (const std::string& item : split_list(value))
        cfg.sweep.seeds.push_back(parse_u64(key, item));
    } else if (key == "outputs.report") {
      cfg.outputs.report = value;
    } else if (key == "outputs.plot") {
      cfg.outputs.plot = value;
    } else if (key == "outputs.checkpoint") {
      cfg.outputs.checkpoint = value;
    } else if (key == "outputs.aggregate") {
      cfg.outputs.aggregate = value;
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string format_double(double x) {
  for (int precision = 1; precision <= 17; ++precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    if (std::stod(buf) == x) return buf;
  }
  return "0";  // unreachable: %.17g always round-trips
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::Rings: return "rings";
    case DatasetKind::Xor: return "xor";
    case DatasetKind::CsvFile: return "csv";
  }
  return "?";
}

std::string to_string(Distance distance) {
  switch (distance) {
    case Distance::MaxSliced: return "max_sliced";
    case Distance::Sliced: return "sliced";
    case Distance::MeanL1: return "mean_l1";
    case Distance::MeanL2: return "mean_l2";
    case Distance::Mmd: return "mmd";
    case Distance::KlDiagGaussian: return "kl_diag_gaussian";
  }
  return "?";
}

std::string to_string(MaxMode mode) {
  return mode == MaxMode::RandomSearch ? "random_search" : "projected_ascent";
}

std::string to_string(DirectionRefresh refresh) {
  return refresh == DirectionRefresh::PerMinibatch ? "per_minibatch" : "per_epoch";
}

std::string to_string(const SeedMode& mode) {
  return mode.seeded ? "seeded:" + std::to_string(mode.seed) : "unseeded";
}

KeyValues config_to_keys(const ExperimentConfig& cfg) {
  KeyValues kv;
  kv["format_version"] = "1";
  kv["dataset.kind"] = to_string(cfg.dataset.kind);
  kv["dataset.n_samples"] = std::to_string(cfg.dataset.n_samples);
  kv["dataset.n_classes"] = std::to_string(cfg.dataset.n_classes);
  kv["dataset.input_dim"] = std::to_string(cfg.dataset.input_dim);
  kv["dataset.noise"] = format_double(cfg.dataset.noise);
  kv["dataset.split"] = format_double(cfg.dataset.split[0]) + "," +
                        format_double(cfg.dataset.split[1]) + "," +
                        format_double(cfg.dataset.split[2]);
  kv["dataset.seed"] = std::to_string(cfg.dataset.seed);
  if (!cfg.dataset.csv_path.empty()) kv["dataset.csv_path"] = cfg.dataset.csv_path;

  std::string widths;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i)
    widths += (i ? "," : "") + std::to_string(cfg.widths[i]);
  kv["net.widths"] = widths;

  kv["train.lambda"] = format_double(cfg.train.lambda);
  kv["train.distance"] = to_string(cfg.train.distance);
  kv["train.p"] = format_double(cfg.train.distance_cfg.p);
  kv["train.n_proj"] = std::to_string(cfg.train.distance_cfg.n_proj);
  kv["train.max_mode"] = to_string(cfg.train.distance_cfg.max_mode);
  kv["train.seed_mode"] = to_string(cfg.train.distance_cfg.seed_mode);
  kv["train.epochs"] = std::to_string(cfg.train.epochs);
  kv["train.batch_size"] = std::to_string(cfg.train.batch_size);
  kv["train.learning_rate"] = format_double(cfg.train.learning_rate);
  kv["train.momentum"] = format_double(cfg.train.momentum);
  kv["train.seed"] = std::to_string(cfg.train.seed);
  kv["train.refresh"] = to_string(cfg.train.refresh);
  kv["train.mmd_bandwidth"] =
      cfg.train.mmd_bandwidth ? format_double(*cfg.train.mmd_bandwidth) : "median";

  kv["compress.delta"] = format_double(cfg.compress.delta);
  kv["compress.epsilon"] =
      cfg.compress.epsilon ? format_double(*cfg.compress.epsilon) : "off";
  kv["compress.heal_epochs"] = std::to_string(cfg.compress.heal_epochs);

  auto join = [](const auto& items, auto&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
    return out;
  };
  if (!cfg.sweep.lambdas.empty())
    kv["sweep.lambda"] = join(cfg.sweep.lambdas, [](double x) { return format_double(x); });
  if (!cfg.sweep.n_projs.empty())
    kv["sweep.n_proj"] = join(cfg.sweep.n_projs, [](int x) { return std::to_string(x); });
  if (!cfg.sweep.batch_sizes.empty())
    kv["sweep.batch_size"] =
        join(cfg.sweep.batch_sizes, [](int x) { return std::to_string(x); });
  if (!cfg.sweep.distances.empty())
    kv["sweep.distance"] =
        join(cfg.sweep.distances, [](Distance d) { return to_string(d); });
  if (!cfg.sweep.seed_modes.empty())
    kv["sweep.seed_mode"] =
        join(cfg.sweep.seed_modes, [](const SeedMode& m) { return to_string(m); });
  if (!cfg.sweep.seeds.empty())
    kv["sweep.seeds"] =
        join(cfg.sweep.seeds, [](std::uint64_t s) { return std::to_string(s); });

  kv["outputs.report"] = cfg.outputs.report;
  kv["outputs.plot"] = cfg.outputs.plot;
  kv["outputs.checkpoint"] = cfg.outputs.checkpoint;
  kv["outputs.aggregate"] = cfg.outputs.aggregate;
  return kv;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return config_from_keys(parse_key_values(buffer.str()));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace otslim
