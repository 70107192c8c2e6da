#pragma once

#include <string>

#include "otslim/compress.hpp"
#include "otslim/config.hpp"

namespace otslim {

// Everything one experiment run leaves behind, in memory: the exact
// configuration it ran under, the training curve, the removal trace, and the
// held-out metrics of the final net.
struct RunReport {
  KeyValues config;
  TrainLog train_log;
  CompressionReport compression;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// JSON with sorted keys and round-trip-exact numbers: serializing the same
// report twice yields identical bytes, and parsing recovers equal values.
std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

bool reports_equal(const RunReport& a, const RunReport& b);

}  // namespace otslim
