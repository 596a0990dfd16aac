#include "fedclust/metrics.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fedclust::metrics {

using nlohmann::json;

json round_to_json(const federation::RoundRecord& record) {
  return json{{"round", record.round},
              {"participants", record.participants},
              {"avg_loss", record.avg_loss},
              {"reduction_ratio", record.reduction_ratio},
              {"p", record.p},
              {"test_accuracy", record.test_accuracy},
              {"cumulative_uploads", record.cumulative_uploads}};
}

federation::RoundRecord round_from_json(const json& j) {
  federation::RoundRecord record;
  record.round = j.at("round").get<int>();
  record.participants = j.at("participants").get<std::vector<int>>();
  record.avg_loss = j.at("avg_loss").get<double>();
  record.reduction_ratio = j.at("reduction_ratio").get<double>();
  record.p = j.at("p").get<int>();
  record.test_accuracy = j.at("test_accuracy").get<double>();
  record.cumulative_uploads = j.at("cumulative_uploads").get<long>();
  return record;
}

void write_rounds(const std::string& path,
                  const std::vector<federation::RoundRecord>& rounds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& record : rounds) {
    out << round_to_json(record).dump() << '\n';
  }
}

std::vector<federation::RoundRecord> read_rounds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<federation::RoundRecord> rounds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rounds.push_back(round_from_json(json::parse(line)));
  }
  if (rounds.empty()) {
    throw std::runtime_error("no metrics rows in " + path);
  }
  return rounds;
}

void write_summary(const std::string& path,
                   const federation::Summary& summary,
                   const std::string& label) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const json j{{"method", label},
               {"top_accuracy", summary.top_accuracy},
               {"total_uploads", summary.total_uploads},
               {"modal_p_last_50", summary.modal_p_last_50},
               {"p_trajectory", summary.p_trajectory}};
  out << j.dump(2) << '\n';
}

LabeledSummary read_run_output(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string first_line;
  std::getline(in, first_line);

  LabeledSummary out;
  if (!first_line.empty() && first_line.front() == '{' &&
      json::accept(first_line)) {
    // JSON-lines metrics: reconstruct the summary from the rows.
    const auto rounds = read_rounds(path);
    out.summary = federation::summarize(rounds);
    out.label = std::filesystem::path(path).stem().string();
    return out;
  }

  in.clear();
  in.seekg(0);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed metrics file " + path + ": " +
                             e.what());
  }
  out.label = j.at("method").get<std::string>();
  out.summary.top_accuracy = j.at("top_accuracy").get<double>();
  out.summary.total_uploads = j.at("total_uploads").get<long>();
  out.summary.modal_p_last_50 = j.at("modal_p_last_50").get<int>();
  out.summary.p_trajectory = j.at("p_trajectory").get<std::vector<int>>();
  return out;
}

}  // namespace fedclust::metrics
