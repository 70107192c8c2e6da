#include "otslim/report.hpp"

#include <json.hpp>

namespace otslim {

namespace {

using nlohmann::json;

json pairs_to_json(const std::vector<std::pair<int, double>>& pairs) {
  json arr = json::array();
  for (const auto& [id, value] : pairs) arr.push_back(json::array({id, value}));
  return arr;
}

std::vector<std::pair<int, double>> pairs_from_json(const json& arr) {
  std::vector<std::pair<int, double>> out;
  for (const json& item : arr)
    out.emplace_back(item.at(0).get<int>(), item.at(1).get<double>());
  return out;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
  json j;
  j["format_version"] = 1;

  json config = json::object();
  for (const auto& [key, value] : report.config) config[key] = value;
  j["config"] = config;

  json epochs = json::array();
  for (const EpochStats& e : report.train_log.epochs)
    epochs.push_back({{"loss", e.loss}, {"reg", e.reg}, {"accuracy", e.accuracy}});
  j["train_log"] = epochs;

  const CompressionReport& c = report.compression;
  json comp;
  comp["dense_accuracy"] = c.dense_accuracy;
  comp["removal_order"] = c.removal_order;
  comp["accuracy_trajectory"] = c.accuracy_trajectory;
  comp["cpl_trajectory"] = c.cpl_trajectory;
  comp["macs_trajectory"] = c.macs_trajectory;
  json snaps = json::array();
  for (const BlockDistanceVector& s : c.distance_snapshots)
    snaps.push_back({{"mean", s.mean}, {"values", pairs_to_json(s.values)}});
  comp["distance_snapshots"] = snaps;
  comp["budget_violated"] = c.budget_violated;
  comp["final_accuracy"] = c.final_accuracy;
  comp["final_cpl"] = c.final_cpl;
  comp["final_macs"] = c.final_macs;
  comp["lipschitz_per_block"] = pairs_to_json(c.lipschitz_per_block);
  comp["lipschitz_product"] = c.lipschitz_product;
  j["compression"] = comp;

  j["metrics"] = {{"val_accuracy", report.val_accuracy},
                  {"test_accuracy", report.test_accuracy}};
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported report format_version");

  RunReport report;
  for (const auto& [key, value] : j.at("config").items())
    report.config[key] = value.get<std::string>();

  for (const json& e : j.at("train_log")) {
    EpochStats stats;
    stats.loss = e.at("loss").get<double>();
    stats.reg = e.at("reg").get<double>();
    stats.accuracy = e.at("accuracy").get<double>();
    report.train_log.epochs.push_back(stats);
  }

  const json& comp = j.at("compression");
  CompressionReport& c = report.compression;
  c.dense_accuracy = comp.at("dense_accuracy").get<double>();
  c.removal_order = comp.at("removal_order").get<std::vector<int>>();
  c.accuracy_trajectory = comp.at("accuracy_trajectory").get<std::vector<double>>();
  c.cpl_trajectory = comp.at("cpl_trajectory").get<std::vector<int>>();
  c.macs_trajectory = comp.at("macs_trajectory").get<std::vector<long long>>();
  for (const json& s : comp.at("distance_snapshots")) {
    BlockDistanceVector snap;
    snap.mean = s.at("mean").get<double>();
    snap.values = pairs_from_json(s.at("values"));
    c.distance_snapshots.push_back(std::move(snap));
  }
  c.budget_violated = comp.at("budget_violated").get<bool>();
  c.final_accuracy = comp.at("final_accuracy").get<double>();
  c.final_cpl = comp.at("final_cpl").get<int>();
  c.final_macs = comp.at("final_macs").get<long long>();
  c.lipschitz_per_block = pairs_from_json(comp.at("lipschitz_per_block"));
  c.lipschitz_product = comp.at("lipschitz_product").get<double>();

  report.val_accuracy = j.at("metrics").at("val_accuracy").get<double>();
  report.test_accuracy = j.at("metrics").at("test_accuracy").get<double>();
  return report;
}

bool reports_equal(const RunReport& a, const RunReport& b) {
  return report_to_json(a) == report_to_json(b);
}

}  // namespace otslim
