#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "otslim/config.hpp"
#include "otslim/report.hpp"

namespace otslim {

// Identity of one sweep cell: the swept axis values (in axis order) and the
// seed when a seed list is swept. The suffix is appended to output filename
// stems so cells never collide.
struct CellKey {
  std::vector<std::pair<std::string, std::string>> axes;
  std::optional<std::uint64_t> seed;

  std::string suffix() const;
};

struct RunArtifacts {
  std::string report_path;
  std::string plot_path;
  std::string checkpoint_path;
  RunReport report;
  double dense_mean_distance = 0.0;  // trained net, validation split
};

// One concrete experiment: dataset, training, removal (budgeted loop, or
// one-shot when compress.epsilon is set), optional healing, then the three
// artifacts: JSON report, plot CSV (the full removal curve of the trained
// net: step, cpl, macs, accuracy, mean_distance), and a checkpoint of the
// final net. The sweep section is ignored here.
RunArtifacts run_single(const ExperimentConfig& config);

// The sweep cells of a config: the cross product of its swept axes (identity
// cell when none) times its seed list. Output paths get the cell suffix.
std::vector<std::pair<ExperimentConfig, CellKey>> expand_sweep(
    const ExperimentConfig& config);

// Runs every cell. With no sweep section this is one run_single.
std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config);

// One aggregated row per axis-value combination: medians over the seed list
// of final validation accuracy, trained-dense mean block distance, critical
// path length, and MACs.
struct AblateRow {
  std::vector<std::pair<std::string, std::string>> axes;
  double final_accuracy = 0.0;
  double mean_distance = 0.0;
  double cpl = 0.0;
  double macs = 0.0;
};

// Runs the full sweep (one or two axes required) and writes the aggregate
// CSV to outputs.aggregate. Returns the rows in cell order.
std::vector<AblateRow> ablate(const ExperimentConfig& config);

// Numeric matrix from a headered CSV (no label column); errors name the
// file, row, and column.
Eigen::MatrixXd read_matrix_csv(const std::string& path);

// The command-line entry point, separated from main() so tests can drive it.
// args excludes the program name. Exit codes: 0 success, 2 configuration or
// usage error, 3 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace otslim
