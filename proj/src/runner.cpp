#include "otslim/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "otslim/datasets.hpp"
#include "otslim/distances.hpp"

namespace otslim {

namespace {

std::string scalar12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string derived_path(const std::string& base, const std::string& suffix) {
  if (suffix.empty()) return base;
  const std::filesystem::path p(base);
  std::filesystem::path out = p.parent_path();
  out /= p.stem().string() + suffix + p.extension().string();
  return out.string();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string text = "step,cpl,macs,accuracy,mean_distance\n";
  for (const CurvePoint& point : curve) {
    text += std::to_string(point.step) + "," + std::to_string(point.cpl) + "," +
            std::to_string(point.macs) + "," + format_double(point.accuracy) + "," +
            format_double(point.mean_distance) + "\n";
  }
  return text;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::logic_error("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::string CellKey::suffix() const {
  std::string out;
  for (const auto& [name, value] : axes) out += "_" + name + value;
  if (seed) out += "_seed" + std::to_string(*seed);
  return out;
}

RunArtifacts run_single(const ExperimentConfig& config) {
  config.validate();
  const Dataset data = generate_dataset(config.dataset);

  Rng init_rng(mix_seed(config.train.seed, 3));
  ResidualNet net =
      build_residual_mlp(data.input_dim(), config.widths, data.n_classes, init_rng);

  RunReport report;
  report.config = config_to_keys(config);
  report.train_log = train(net, data.X_train, data.y_train, config.train);

  const ResidualNet dense = net;  // trained weights, every block still live

  Rng loop_rng(mix_seed(config.train.seed, 4));
  report.compression =
      config.compress.epsilon
          ? compress_epsilon(net, data.X_val, data.y_val, config.train,
                             *config.compress.epsilon, loop_rng)
          : compress_loop(net, data.X_val, data.y_val, config.train,
                          config.compress.delta, loop_rng);

  if (config.compress.heal_epochs > 0) {
    const TrainLog heal_log =
        heal(net, data.X_train, data.y_train, config.train, config.compress.heal_epochs);
    for (const EpochStats& e : heal_log.epochs) report.train_log.epochs.push_back(e);
  }

  report.val_accuracy = accuracy(net, data.X_val, data.y_val);
  report.test_accuracy = accuracy(net, data.X_test, data.y_test);

  // The plot artifact is the whole accuracy-vs-size curve of the trained
  // net, walked past the budget so the cliff is visible.
  Rng curve_rng(mix_seed(config.train.seed, 5));
  const std::vector<CurvePoint> curve = removal_curve(
      dense, data.X_val, data.y_val, config.train, ScoreKind::Msw, curve_rng);

  RunArtifacts artifacts;
  artifacts.report_path = config.outputs.report;
  artifacts.plot_path = config.outputs.plot;
  artifacts.checkpoint_path = config.outputs.checkpoint;
  artifacts.report = std::move(report);
  artifacts.dense_mean_distance = curve.empty() ? 0.0 : curve.front().mean_distance;

  write_text_file(artifacts.report_path, report_to_json(artifacts.report));
  write_text_file(artifacts.plot_path, curve_csv(curve));
  const std::filesystem::path ckpt_parent =
      std::filesystem::path(artifacts.checkpoint_path).parent_path();
  if (!ckpt_parent.empty()) std::filesystem::create_directories(ckpt_parent);
  save_checkpoint(net, artifacts.checkpoint_path);
  return artifacts;
}

std::vector<std::pair<ExperimentConfig, CellKey>> expand_sweep(
    const ExperimentConfig& config) {
  config.validate();

  struct AxisDef {
    std::string name;
    std::size_t count;
    std::function<void(ExperimentConfig&, std::size_t)> apply;
    std::function<std::string(std::size_t)> token;
  };
  const SweepSettings& sweep = config.sweep;
  std::vector<AxisDef> axes;
  if (!sweep.lambdas.empty())
    axes.push_back({"lambda", sweep.lambdas.size(),
                    [&](ExperimentConfig& c, std::size_t i) {
                      c.train.lambda = sweep.lambdas[i];
                    },
                    [&](std::size_t i) { return format_double(sweep.lambdas[i]); }});
  if (!sweep.n_projs.empty())
    axes.push_back({"nproj", sweep.n_projs.size(),
                    [&](ExperimentConfig& c, std::size_t i) {
                      c.train.distance_cfg.n_proj = sweep.n_projs[i];
                    },
                    [&](std::size_t i) { return std::to_string(sweep.n_projs[i]); }});
  if (!sweep.batch_sizes.empty())
    axes.push_back({"batch", sweep.batch_sizes.size(),
                    [&](ExperimentConfig& c, std::size_t i) {
                      c.train.batch_size = sweep.batch_sizes[i];
                    },
                    [&](std::size_t i) { return std::to_string(sweep.batch_sizes[i]); }});
  if (!sweep.distances.empty())
    axes.push_back({"distance", sweep.distances.size(),
                    [&](ExperimentConfig& c, std::size_t i) {
                      c.train.distance = sweep.distances[i];
                    },
                    [&](std::size_t i) { return to_string(sweep.distances[i]); }});
  if (!sweep.seed_modes.empty())
    axes.push_back({"seedmode", sweep.seed_modes.size(),
                    [&](ExperimentConfig& c, std::size_t i) {
                      c.train.distance_cfg.seed_mode = sweep.seed_modes[i];
                    },
                    [&](std::size_t i) { return to_string(sweep.seed_modes[i]); }});

  std::vector<std::pair<ExperimentConfig, CellKey>> combos;
  ExperimentConfig base = config;
  base.sweep = SweepSettings{};
  if (axes.empty()) {
    combos.emplace_back(base, CellKey{});
  } else if (axes.size() == 1) {
    for (std::size_t i = 0; i < axes[0].count; ++i) {
      ExperimentConfig cell = base;
      axes[0].apply(cell, i);
      combos.emplace_back(cell, CellKey{{{axes[0].name, axes[0].token(i)}}, {}});
    }
  } else {
    for (std::size_t i = 0; i < axes[0].count; ++i)
      for (std::size_t j = 0; j < axes[1].count; ++j) {
        ExperimentConfig cell = base;
        axes[0].apply(cell, i);
        axes[1].apply(cell, j);
        combos.emplace_back(cell, CellKey{{{axes[0].name, axes[0].token(i)},
                                           {axes[1].name, axes[1].token(j)}},
                                          {}});
      }
  }

  std::vector<std::pair<ExperimentConfig, CellKey>> cells;
  for (const auto& [combo_cfg, combo_key] : combos) {
    if (sweep.seeds.empty()) {
      cells.emplace_back(combo_cfg, combo_key);
    } else {
      for (std::uint64_t s : sweep.seeds) {
        ExperimentConfig cell = combo_cfg;
        cell.train.seed = s;
        CellKey key = combo_key;
        key.seed = s;
        cells.emplace_back(cell, key);
      }
    }
  }

  for (auto& [cell, key] : cells) {
    const std::string suffix = key.suffix();
    cell.outputs.report = derived_path(config.outputs.report, suffix);
    cell.outputs.plot = derived_path(config.outputs.plot, suffix);
    cell.outputs.checkpoint = derived_path(config.outputs.checkpoint, suffix);
  }
  return cells;
}

std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config) {
  std::vector<RunArtifacts> artifacts;
  for (const auto& [cell, key] : expand_sweep(config))
    artifacts.push_back(run_single(cell));
  return artifacts;
}

std::vector<AblateRow> ablate(const ExperimentConfig& config) {
  config.validate();
  const int axes = config.sweep.axis_count();
  if (axes < 1 || axes > 2)
    throw ConfigError("ablation needs exactly one or two swept axes");

  const auto cells = expand_sweep(config);
  const std::size_t seeds_per_combo =
      config.sweep.seeds.empty() ? 1 : config.sweep.seeds.size();

  std::vector<AblateRow> rows;
  for (std::size_t start = 0; start < cells.size(); start += seeds_per_combo) {
    std::vector<double> acc, dist, cpl, macs;
    for (std::size_t k = 0; k < seeds_per_combo; ++k) {
      const RunArtifacts art = run_single(cells[start + k].first);
      acc.push_back(art.report.val_accuracy);
      dist.push_back(art.dense_mean_distance);
      cpl.push_back(static_cast<double>(art.report.compression.final_cpl));
      macs.push_back(static_cast<double>(art.report.compression.final_macs));
    }
    AblateRow row;
    row.axes = cells[start].second.axes;
    row.final_accuracy = median(acc);
    row.mean_distance = median(dist);
    row.cpl = median(cpl);
    row.macs = median(macs);
    rows.push_back(std::move(row));
  }

  std::string csv;
  for (const auto& [name, value] : rows.front().axes) csv += name + ",";
  csv += "final_accuracy,mean_distance,cpl,macs\n";
  for (const AblateRow& row : rows) {
    for (const auto& [name, value] : row.axes) csv += value + ",";
    csv += format_double(row.final_accuracy) + "," + format_double(row.mean_distance) +
           "," + format_double(row.cpl) + "," + format_double(row.macs) + "\n";
  }
  write_text_file(config.outputs.aggregate, csv);
  return rows;
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");

  auto fail = [&](int row, const std::string& what) {
    throw ConfigError(path + ": row " + std::to_string(row) + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line)) fail(1, "missing header row");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty()) fail(1, "empty header row");

  std::vector<std::vector<double>> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        std::size_t used = 0;
        const double x = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(x);
      } catch (const std::exception&) {
        fail(row_no, "column " + std::to_string(col) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != header.size())
      fail(row_no, "expected " + std::to_string(header.size()) + " cells, found " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(row_no, "no data rows");

  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < header.size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return X;
}

namespace {

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     const std::vector<std::string>& sets,
                                     const std::optional<std::uint64_t>& seed) {
  KeyValues kv;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError(config_path + ": cannot open config file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    kv = parse_key_values(buffer.str());
  } else {
    kv["format_version"] = "1";
  }
  for (const std::string& item : sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  if (seed) {
    kv["train.seed"] = std::to_string(*seed);
    kv["dataset.seed"] = std::to_string(*seed);
  }
  try {
    return config_from_keys(kv);
  } catch (const ConfigError& e) {
    if (config_path.empty()) throw;
    throw ConfigError(config_path + ": " + e.what());
  }
}

int cmd_train(const ExperimentConfig& config, std::ostream& out) {
  const Dataset data = generate_dataset(config.dataset);
  Rng init_rng(mix_seed(config.train.seed, 3));
  ResidualNet net =
      build_residual_mlp(data.input_dim(), config.widths, data.n_classes, init_rng);

  RunReport report;
  report.config = config_to_keys(config);
  report.train_log = train(net, data.X_train, data.y_train, config.train);
  report.val_accuracy = accuracy(net, data.X_val, data.y_val);
  report.test_accuracy = accuracy(net, data.X_test, data.y_test);
  report.compression.dense_accuracy = report.val_accuracy;
  report.compression.final_accuracy = report.val_accuracy;
  report.compression.final_cpl = critical_path_length(net);
  report.compression.final_macs = macs(net);

  write_text_file(config.outputs.report, report_to_json(report));
  const std::filesystem::path parent =
      std::filesystem::path(config.outputs.checkpoint).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_checkpoint(net, config.outputs.checkpoint);

  out << "report " << config.outputs.report << "\n";
  out << "checkpoint " << config.outputs.checkpoint << "\n";
  return 0;
}

int cmd_compress(const ExperimentConfig& config, std::ostream& out) {
  const auto cells = expand_sweep(config);
  for (const auto& [cell, key] : cells) {
    const RunArtifacts art = run_single(cell);
    out << "report " << art.report_path << "\n";
    out << "plot " << art.plot_path << "\n";
    out << "checkpoint " << art.checkpoint_path << "\n";
  }
  return 0;
}

int cmd_ablate(const ExperimentConfig& config, std::ostream& out) {
  ablate(config);
  out << "aggregate " << config.outputs.aggregate << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& config, const std::string& checkpoint_path,
             std::ostream& out) {
  ResidualNet net = load_checkpoint(checkpoint_path);
  const Dataset data = generate_dataset(config.dataset);
  if (data.input_dim() != net.input_dim)
    throw std::runtime_error(checkpoint_path + ": checkpoint expects input width " +
                             std::to_string(net.input_dim) + ", dataset provides " +
                             std::to_string(data.input_dim()));

  Rng rng(mix_seed(config.train.seed, 6));
  const BlockDistanceVector dist =
      block_distances(net, data.X_val, config.train, rng);

  out << "val_accuracy " << scalar12(accuracy(net, data.X_val, data.y_val)) << "\n";
  out << "test_accuracy " << scalar12(accuracy(net, data.X_test, data.y_test)) << "\n";
  out << "cpl " << critical_path_length(net) << "\n";
  out << "macs " << macs(net) << "\n";
  out << "mean_distance " << scalar12(dist.mean) << "\n";
  return 0;
}

int cmd_distances(const std::string& file_a, const std::string& file_b,
                  const std::string& metric, const DistanceConfig& dcfg,
                  std::optional<double> bandwidth, std::uint64_t seed,
                  std::ostream& out) {
  const PointCloud a{read_matrix_csv(file_a)};
  const PointCloud b{read_matrix_csv(file_b)};
  if (a.dim() != b.dim())
    throw ConfigError(file_a + ", " + file_b + ": clouds have different widths (" +
                      std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  if (metric != "mmd" && a.size() != b.size())
    throw ConfigError(file_a + ", " + file_b +
                      ": this metric pairs samples, but the clouds have " +
                      std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                      " rows");

  Rng rng(seed);
  double value = 0.0;
  if (metric == "max_sliced") {
    value = max_sliced_wasserstein(a, b, dcfg, rng).value;
  } else if (metric == "sliced") {
    value = sliced_wasserstein(a, b, dcfg, rng);
  } else if (metric == "mean_l1") {
    value = mean_lp(a, b, 1);
  } else if (metric == "mean_l2") {
    value = mean_lp(a, b, 2);
  } else if (metric == "mmd") {
    value = mmd_rbf(a, b, bandwidth);
  } else if (metric == "kl_diag_gaussian") {
    value = kl_diag_gaussian(a, b);
  } else if (metric == "exact") {
    value = exact_wasserstein_small(a, b, dcfg.p);
  } else {
    throw ConfigError("unknown metric '" + metric + "'");
  }
  out << scalar12(value) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Residual-depth compression via distribution distances"};
  app.require_subcommand(1);

  struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
  };
  auto add_common = [](CLI::App* cmd, Common& common, bool config_required) {
    auto* opt = cmd->add_option("--config", common.config_path,
                                "experiment config file (key = value lines)");
    if (config_required) opt->required();
    cmd->add_option("--set", common.sets,
                    "override a config key, e.g. --set train.lambda=1");
    cmd->add_option("--seed", common.seed,
                    "set train.seed and dataset.seed at once");
  };

  Common train_common, compress_common, ablate_common, eval_common;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a dense model; write report + checkpoint");
  add_common(train_cmd, train_common, true);

  CLI::App* compress_cmd = app.add_subcommand(
      "compress", "train, remove blocks, write report + plot data + checkpoint");
  add_common(compress_cmd, compress_common, true);

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "run a one- or two-axis sweep and write the aggregate table");
  add_common(ablate_cmd, ablate_common, true);

  std::string eval_checkpoint;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset config");
  add_common(eval_cmd, eval_common, true);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();

  std::string dist_a, dist_b, dist_metric;
  double dist_p = 2.0;
  int dist_nproj = 40;
  std::string dist_mode = "random_search";
  std::string dist_seed_mode = "unseeded";
  std::optional<double> dist_bandwidth;
  std::uint64_t dist_seed = 0;
  CLI::App* dist_cmd =
      app.add_subcommand("distances", "distance between two CSV point clouds");
  dist_cmd->add_option("cloud_a", dist_a, "first cloud (numeric CSV with header)")
      ->required();
  dist_cmd->add_option("cloud_b", dist_b, "second cloud")->required();
  dist_cmd
      ->add_option("--metric", dist_metric,
                   "max_sliced|sliced|mean_l1|mean_l2|mmd|kl_diag_gaussian|exact")
      ->required();
  dist_cmd->add_option("--p", dist_p, "distance order (default 2)");
  dist_cmd->add_option("--n-proj", dist_nproj, "projection count (default 40)");
  dist_cmd->add_option("--mode", dist_mode, "random_search|projected_ascent");
  dist_cmd->add_option("--seed-mode", dist_seed_mode, "unseeded|seeded:<integer>");
  dist_cmd->add_option("--bandwidth", dist_bandwidth, "MMD kernel sigma");
  dist_cmd->add_option("--seed", dist_seed, "stream seed for unseeded draws");

  std::vector<const char*> argv;
  argv.push_back("otslim");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (*train_cmd)
      return cmd_train(load_with_overrides(train_common.config_path,
                                           train_common.sets, train_common.seed),
                       out);
    if (*compress_cmd)
      return cmd_compress(load_with_overrides(compress_common.config_path,
                                              compress_common.sets,
                                              compress_common.seed),
                          out);
    if (*ablate_cmd)
      return cmd_ablate(load_with_overrides(ablate_common.config_path,
                                            ablate_common.sets, ablate_common.seed),
                        out);
    if (*eval_cmd)
      return cmd_eval(load_with_overrides(eval_common.config_path, eval_common.sets,
                                          eval_common.seed),
                      eval_checkpoint, out);
    if (*dist_cmd) {
      DistanceConfig dcfg;
      dcfg.p = dist_p;
      dcfg.n_proj = dist_nproj;
      if (dist_mode == "random_search")
        dcfg.max_mode = MaxMode::RandomSearch;
      else if (dist_mode == "projected_ascent")
        dcfg.max_mode = MaxMode::ProjectedAscent;
      else
        throw ConfigError("--mode expects random_search|projected_ascent, got '" +
                          dist_mode + "'");
      if (dist_seed_mode == "unseeded")
        dcfg.seed_mode = SeedMode::Unseeded();
      else if (dist_seed_mode.rfind("seeded:", 0) == 0)
        dcfg.seed_mode = SeedMode::Seeded(std::stoull(dist_seed_mode.substr(7)));
      else
        throw ConfigError("--seed-mode expects unseeded|seeded:<integer>, got '" +
                          dist_seed_mode + "'");
      dcfg.validate();
      return cmd_distances(dist_a, dist_b, dist_metric, dcfg, dist_bandwidth,
                           dist_seed, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace otslim
