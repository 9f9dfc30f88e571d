// Copyright 2026 The medvqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEDVQA_HARNESS_METRICS_HPP_
#define MEDVQA_HARNESS_METRICS_HPP_

#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medvqa/core/error.hpp"
#include "medvqa/data/records.hpp"
#include "medvqa/io/csv.hpp"

namespace medvqa::harness {

/// Open/closed/overall accuracy decomposition for one evaluation run.
/// Accuracies of empty partitions are absent rather than zero.
struct MetricsReport {
  std::optional<double> open_accuracy;
  std::optional<double> closed_accuracy;
  double overall_accuracy = 0.0;
  std::size_t n_open = 0;
  std::size_t n_closed = 0;
  std::map<std::string, double> per_question_type;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"overall_accuracy", overall_accuracy},
                        {"n_open", n_open},
                        {"n_closed", n_closed}};
    if (open_accuracy) j["open_accuracy"] = *open_accuracy;
    if (closed_accuracy) j["closed_accuracy"] = *closed_accuracy;
    j["per_question_type"] = per_question_type;
    return j;
  }

  /// Aligned-column text layout: open | closed | overall.
  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "  open    closed  overall\n";
    auto cell = [&](const std::optional<double>& v) {
      if (v) os << std::setw(6) << (*v * 100.0) << "%";
      else os << "     -";
      os << "  ";
    };
    cell(open_accuracy);
    cell(closed_accuracy);
    os << std::setw(6) << (overall_accuracy * 100.0) << "%\n";
    return os.str();
  }
};

struct PredictionRow {
  std::string image_id;
  std::string question;
  std::string gold_answer;
  std::string predicted_answer;
  bool correct = false;
};

struct PredictionDump {
  std::vector<PredictionRow> rows;

  PredictionDump failures_only() const {
    PredictionDump out;
    for (const auto& r : rows) {
      if (!r.correct) out.rows.push_back(r);
    }
    return out;
  }

  std::string to_csv() const {
    std::string text =
        "image_id,question,gold_answer,predicted_answer,correct\n";
    for (const auto& r : rows) {
      text += io::csv_join({r.image_id, r.question, r.gold_answer,
                            r.predicted_answer, r.correct ? "true" : "false"});
      text += '\n';
    }
    return text;
  }

  static PredictionDump from_csv(const std::string& text) {
    PredictionDump dump;
    const auto rows = io::csv_parse(text);
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
      if (rows[i].size() != 5) {
        throw Error(ErrorKind::MalformedRow,
                    "prediction dump row " + std::to_string(i) +
                        " does not have 5 columns");
      }
      dump.rows.push_back({rows[i][0], rows[i][1], rows[i][2], rows[i][3],
                           rows[i][4] == "true"});
    }
    return dump;
  }
};

/// Accuracy decomposition of a prediction dump aligned one-to-one with its
/// source records.
inline MetricsReport compute_accuracy(const PredictionDump& dump,
                                      const std::vector<data::VqaRecord>& records) {
  if (dump.rows.size() != records.size()) {
    throw Error(ErrorKind::AlignmentError,
                "prediction dump and record list differ in length");
  }
  MetricsReport report;
  std::size_t open_correct = 0, closed_correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_type;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const auto& row = dump.rows[i];
    if (row.image_id != rec.image_id) {
      throw Error(ErrorKind::AlignmentError,
                  "dump row " + std::to_string(i) +
                      " does not match its record's image_id");
    }
    if (rec.answer_type == data::AnswerType::open) {
      ++report.n_open;
      if (row.correct) ++open_correct;
    } else {
      ++report.n_closed;
      if (row.correct) ++closed_correct;
    }
    auto& [total, correct] = by_type[rec.question_type];
    ++total;
    if (row.correct) ++correct;
  }
  if (report.n_open > 0) {
    report.open_accuracy = static_cast<double>(open_correct) /
                           static_cast<double>(report.n_open);
  }
  if (report.n_closed > 0) {
    report.closed_accuracy = static_cast<double>(closed_correct) /
                             static_cast<double>(report.n_closed);
  }
  const std::size_t total = report.n_open + report.n_closed;
  if (total > 0) {
    report.overall_accuracy =
        static_cast<double>(open_correct + closed_correct) /
        static_cast<double>(total);
  }
  for (const auto& [type, counts] : by_type) {
    report.per_question_type[type] =
        static_cast<double>(counts.second) / static_cast<double>(counts.first);
  }
  return report;
}

/// Mean of per-run reports, field by field; optional fields are averaged
/// over the runs where they are present.
struct RunAggregate {
  std::vector<MetricsReport> per_run;
  MetricsReport mean_report;
  std::size_t run_count = 0;
};

inline RunAggregate aggregate_runs(std::vector<MetricsReport> per_run) {
  if (per_run.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "cannot aggregate zero runs");
  }
  RunAggregate agg;
  agg.run_count = per_run.size();
  MetricsReport& mean = agg.mean_report;
  double open_sum = 0.0, closed_sum = 0.0;
  std::size_t open_n = 0, closed_n = 0;
  std::map<std::string, std::pair<double, std::size_t>> type_sums;
  for (const auto& r : per_run) {
    mean.overall_accuracy += r.overall_accuracy;
    if (r.open_accuracy) { open_sum += *r.open_accuracy; ++open_n; }
    if (r.closed_accuracy) { closed_sum += *r.closed_accuracy; ++closed_n; }
    for (const auto& [type, acc] : r.per_question_type) {
      auto& [sum, n] = type_sums[type];
      sum += acc;
      ++n;
    }
  }
  const double inv = 1.0 / static_cast<double>(per_run.size());
  mean.overall_accuracy *= inv;
  if (open_n > 0) mean.open_accuracy = open_sum / static_cast<double>(open_n);
  if (closed_n > 0) {
    mean.closed_accuracy = closed_sum / static_cast<double>(closed_n);
  }
  mean.n_open = per_run.front().n_open;
  mean.n_closed = per_run.front().n_closed;
  for (const auto& [type, sum_n] : type_sums) {
    mean.per_question_type[type] =
        sum_n.first / static_cast<double>(sum_n.second);
  }
  agg.per_run = std::move(per_run);
  return agg;
}

}  // namespace medvqa::harness

#endif  // MEDVQA_HARNESS_METRICS_HPP_
