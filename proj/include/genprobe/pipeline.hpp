#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genprobe/embeddings.hpp"
#include "genprobe/experiment.hpp"
#include "genprobe/report.hpp"

namespace genprobe {

struct LanguageInputs {
  std::string code;
  std::filesystem::path corpus;
  std::filesystem::path concepts;
};

struct ExperimentConfig {
  std::vector<LanguageInputs> languages;
  std::filesystem::path output = "out";
  std::uint64_t seed = 42;
  bool deterministic = true;
  int jobs = 1;
  std::uint64_t min_count = 5;
  SgnsConfig sgns;
  LexiconSettings lexicon;
  ClassifierSettings classifier;
  DensifierSettings densifier;
  std::size_t top_k = 5;

  // Paths must exist; numeric settings must be in range.
  void validate() const;
};

// Environment lookup used for path overrides (GENPROBE_OUTPUT,
// GENPROBE_CORPUS_<LANG>, GENPROBE_CONCEPTS_<LANG>).
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_environment();

// INI-style config with [experiment], [language.<code>], [vocab], [sgns],
// [lexicon], [classifier], [densifier] and [stats] sections. Relative paths
// resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const EnvLookup& env = process_environment());
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir,
                                         const EnvLookup& env = process_environment());

struct StageRecord {
  std::string stage;
  std::string language;
  std::string condition;  // empty for language-level stages
  bool executed;          // false = cache hit
};

struct LanguageResult {
  std::string language;
  std::optional<ExperimentReport> report;
  std::string failed_stage;
  std::string error;
  int exit_code = 0;
};

struct PipelineResult {
  std::vector<LanguageResult> languages;
  std::vector<StageRecord> stages;

  int exit_code() const;
  std::size_t executed(const std::string& stage) const;
  std::size_t executed_total() const;
};

// Seed of one run, a pure function of the global seed and its coordinates.
std::uint64_t run_seed(std::uint64_t global, const std::string& language, const std::string& what,
                       const std::string& condition = {});

PipelineResult run_pipeline(const ExperimentConfig& config);

}  // namespace genprobe
