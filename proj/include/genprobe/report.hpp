#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "genprobe/corpus.hpp"
#include "genprobe/error.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/ultradense.hpp"

namespace genprobe {

struct SplitAccuracy {
  int split_id = 0;
  double accuracy = 0.0;
  double baseline = 0.0;
  double p_value = 1.0;
  int n_test = 0;
};

struct SplitCorrelation {
  int split_id = 0;
  double rho = 0.0;
  double p_value = 1.0;
  int n = 0;
};

// Everything one (language, condition) run contributes to the report.
struct ConditionRun {
  ConditionKind condition = ConditionKind::forms;
  std::vector<SplitAccuracy> accuracy;
  std::vector<SplitCorrelation> correlation;
  // Test-half scores of split 0, oriented so that larger means more feminine.
  std::vector<ScoredLemma> scores;
};

struct AccuracyRow {
  ConditionKind condition;
  double accuracy;   // mean over splits
  double baseline;   // mean over splits
  double p_value;    // merged over splits
  bool significant;
  int significant_splits;
  int n_splits;
};

struct CorrelationRow {
  ConditionKind condition;
  CorrelationResult result;  // rho = mean over splits, p merged over splits
  int significant_splits;
  int n_splits;
};

struct GenderedListing {
  ConditionKind condition;
  std::vector<ScoredLemma> feminine;   // highest scores first
  std::vector<ScoredLemma> masculine;  // lowest scores first
};

struct ExperimentReport {
  std::string language;
  std::vector<AccuracyRow> accuracies;  // forms, lemmata, nouns, not_nouns
  double baseline = 0.0;
  std::vector<CorrelationRow> correlations;
  std::vector<GenderedListing> listings;
  std::map<std::string, long long> diagnostics;
};

class AssemblyError : public DataError {
 public:
  using DataError::DataError;
};

ExperimentReport assemble_report(const std::string& language, const std::vector<ConditionRun>& runs,
                                 std::size_t top_k = 5, const std::map<std::string, long long>& diagnostics = {});

enum class ReportFormat { tsv, json, table };

std::optional<ReportFormat> parse_report_format(std::string_view name);

std::string render_report(const ExperimentReport& report, ReportFormat format);
std::string render_reports(const std::vector<ExperimentReport>& reports, ReportFormat format);

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

}  // namespace genprobe
