#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fedclust/federation.hpp"

namespace fedclust::metrics {

nlohmann::json round_to_json(const federation::RoundRecord& record);
federation::RoundRecord round_from_json(const nlohmann::json& j);

// JSON-lines, one RoundRecord per line.
void write_rounds(const std::string& path,
                  const std::vector<federation::RoundRecord>& rounds);
std::vector<federation::RoundRecord> read_rounds(const std::string& path);

void write_summary(const std::string& path,
                   const federation::Summary& summary,
                   const std::string& label);

struct LabeledSummary {
  std::string label;
  federation::Summary summary;
};

// Accepts either a summary JSON file or a metrics JSON-lines file (the label
// then falls back to the file name and totals are recomputed from the rows).
LabeledSummary read_run_output(const std::string& path);

}  // namespace fedclust::metrics
