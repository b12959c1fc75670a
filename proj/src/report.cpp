#include "genprobe/report.hpp"

#include <algorithm>
#include <sstream>

#include "genprobe/error.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

namespace {

std::string fixed(double v) { return format_double(v, 4); }

std::vector<ScoredLemma> top_scores(std::vector<ScoredLemma> scores, std::size_t k, bool descending) {
  std::sort(scores.begin(), scores.end(), [&](const ScoredLemma& a, const ScoredLemma& b) {
    if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
    return a.lemma < b.lemma;
  });
  if (scores.size() > k) scores.resize(k);
  return scores;
}

}  // namespace

ExperimentReport assemble_report(const std::string& language, const std::vector<ConditionRun>& runs,
                                 std::size_t top_k, const std::map<std::string, long long>& diagnostics) {
  ExperimentReport report;
  report.language = language;
  report.diagnostics = diagnostics;
  bool have_baseline = false;
  for (ConditionKind kind : kAllConditions) {
    const auto matches = std::count_if(runs.begin(), runs.end(), [&](const ConditionRun& r) { return r.condition == kind; });
    if (matches == 0) throw AssemblyError("report for " + language + ": missing condition " + std::string(to_string(kind)));
    if (matches > 1) throw AssemblyError("report for " + language + ": duplicate condition " + std::string(to_string(kind)));
    const ConditionRun& run = *std::find_if(runs.begin(), runs.end(), [&](const ConditionRun& r) { return r.condition == kind; });
    if (run.accuracy.empty() || run.correlation.empty()) {
      throw AssemblyError("report for " + language + ": condition " + std::string(to_string(kind)) + " has no splits");
    }

    std::vector<double> acc, base, p;
    int sig = 0;
    for (const auto& s : run.accuracy) {
      acc.push_back(s.accuracy);
      base.push_back(s.baseline);
      p.push_back(s.p_value);
      sig += s.p_value < kSignificanceLevel;
    }
    const double merged = merge_p_values(p);
    report.accuracies.push_back({kind, mean(acc), mean(base), merged, merged < kSignificanceLevel, sig,
                                 static_cast<int>(run.accuracy.size())});
    if (!have_baseline) {
      report.baseline = mean(base);
      have_baseline = true;
    }

    std::vector<double> rho, rp;
    int rsig = 0;
    for (const auto& s : run.correlation) {
      rho.push_back(s.rho);
      rp.push_back(s.p_value);
      rsig += s.p_value < kSignificanceLevel;
    }
    CorrelationResult cr;
    cr.rho = mean(rho);
    cr.p_value = merge_p_values(rp);
    cr.n = static_cast<std::size_t>(run.correlation.front().n);
    cr.significant = cr.p_value < kSignificanceLevel;
    report.correlations.push_back({kind, cr, rsig, static_cast<int>(run.correlation.size())});

    report.listings.push_back({kind, top_scores(run.scores, top_k, true), top_scores(run.scores, top_k, false)});
  }
  return report;
}

std::optional<ReportFormat> parse_report_format(std::string_view name) {
  const std::string n = fold_case(trim(name));
  if (n == "tsv") return ReportFormat::tsv;
  if (n == "json") return ReportFormat::json;
  if (n == "table") return ReportFormat::table;
  return std::nullopt;
}

namespace {

std::string render_tsv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "language\t" << r.language << '\n';
  out << "accuracy\tcondition\taccuracy\tbaseline\tp_value\tsignificant\tsignificant_splits\tn_splits\n";
  for (const auto& a : r.accuracies) {
    out << "accuracy\t" << to_string(a.condition) << '\t' << fixed(a.accuracy) << '\t' << fixed(a.baseline) << '\t'
        << fixed(a.p_value) << '\t' << (a.significant ? "yes" : "no") << '\t' << a.significant_splits << '\t'
        << a.n_splits << '\n';
  }
  out << "baseline\tmajority\t" << fixed(r.baseline) << '\n';
  out << "correlation\tcondition\trho\tp_value\tn\tsignificant\tsignificant_splits\tn_splits\n";
  for (const auto& c : r.correlations) {
    out << "correlation\t" << to_string(c.condition) << '\t' << fixed(c.result.rho) << '\t' << fixed(c.result.p_value)
        << '\t' << c.result.n << '\t' << (c.result.significant ? "yes" : "no") << '\t' << c.significant_splits << '\t'
        << c.n_splits << '\n';
  }
  out << "listing\tcondition\tdirection\trank\tlemma\tscore\tgold\n";
  for (const auto& l : r.listings) {
    auto emit = [&](const std::vector<ScoredLemma>& v, std::string_view dir) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        out << "listing\t" << to_string(l.condition) << '\t' << dir << '\t' << i + 1 << '\t' << v[i].lemma << '\t'
            << fixed(v[i].score) << '\t' << to_string(v[i].gold) << '\n';
      }
    };
    emit(l.feminine, "feminine");
    emit(l.masculine, "masculine");
  }
  for (const auto& [k, v] : r.diagnostics) out << "diagnostic\t" << k << '\t' << v << '\n';
  return out.str();
}

// Left-aligned columns padded to the widest cell.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += row[i];
      if (i + 1 < row.size()) line.append(width[i] - row[i].size() + 2, ' ');
    }
    out += trim_right(line);
    out += '\n';
  }
  return out;
}

std::string render_table(const ExperimentReport& r) {
  std::string out = "Language: " + r.language + "\n\nClassifier accuracy (mean over splits)\n";
  std::vector<std::vector<std::string>> acc{{"condition", "accuracy", "baseline", "p", "sig", "splits<0.05"}};
  for (const auto& a : r.accuracies) {
    acc.push_back({std::string(to_string(a.condition)), fixed(a.accuracy), fixed(a.baseline), fixed(a.p_value),
                   a.significant ? "*" : "", std::to_string(a.significant_splits) + "/" + std::to_string(a.n_splits)});
  }
  acc.push_back({"majority", fixed(r.baseline)});
  out += align(acc);
  out += "\nGender dimension (Spearman rho, mean over splits)\n";
  std::vector<std::vector<std::string>> cor{{"condition", "rho", "p", "n", "sig", "splits<0.05"}};
  for (const auto& c : r.correlations) {
    cor.push_back({std::string(to_string(c.condition)), fixed(c.result.rho), fixed(c.result.p_value),
                   std::to_string(c.result.n), c.result.significant ? "*" : "",
                   std::to_string(c.significant_splits) + "/" + std::to_string(c.n_splits)});
  }
  out += align(cor);
  out += "\nMost gendered test lemmas\n";
  std::vector<std::vector<std::string>> lst{{"condition", "rank", "feminine", "score", "masculine", "score"}};
  for (const auto& l : r.listings) {
    const std::size_t n = std::max(l.feminine.size(), l.masculine.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> row{i == 0 ? std::string(to_string(l.condition)) : "", std::to_string(i + 1)};
      if (i < l.feminine.size()) {
        row.push_back(l.feminine[i].lemma);
        row.push_back(fixed(l.feminine[i].score));
      } else {
        row.insert(row.end(), {"", ""});
      }
      if (i < l.masculine.size()) {
        row.push_back(l.masculine[i].lemma);
        row.push_back(fixed(l.masculine[i].score));
      }
      lst.push_back(std::move(row));
    }
  }
  out += align(lst);
  if (!r.diagnostics.empty()) {
    out += "\nDiagnostics\n";
    std::vector<std::vector<std::string>> diag;
    for (const auto& [k, v] : r.diagnostics) diag.push_back({k, std::to_string(v)});
    out += align(diag);
  }
  return out;
}

nlohmann::json scores_json(const std::vector<ScoredLemma>& v) {
  auto a = nlohmann::json::array();
  for (const auto& s : v) a.push_back({{"lemma", s.lemma}, {"score", s.score}, {"gold", to_string(s.gold)}});
  return a;
}

std::vector<ScoredLemma> scores_from_json(const nlohmann::json& a) {
  std::vector<ScoredLemma> out;
  for (const auto& s : a) {
    auto g = parse_gender(s.at("gold").get<std::string>());
    if (!g) throw FormatError("report: bad gender in listing");
    out.push_back({s.at("lemma").get<std::string>(), s.at("score").get<double>(), *g});
  }
  return out;
}

ConditionKind condition_from_json(const nlohmann::json& j) {
  auto c = parse_condition(j.get<std::string>());
  if (!c) throw FormatError("report: unknown condition '" + j.get<std::string>() + "'");
  return *c;
}

}  // namespace

nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["language"] = r.language;
  j["baseline"] = r.baseline;
  j["accuracy"] = nlohmann::json::array();
  for (const auto& a : r.accuracies) {
    j["accuracy"].push_back({{"condition", to_string(a.condition)},
                             {"accuracy", a.accuracy},
                             {"baseline", a.baseline},
                             {"p_value", a.p_value},
                             {"significant", a.significant},
                             {"significant_splits", a.significant_splits},
                             {"n_splits", a.n_splits}});
  }
  j["correlation"] = nlohmann::json::array();
  for (const auto& c : r.correlations) {
    j["correlation"].push_back({{"condition", to_string(c.condition)},
                                {"rho", c.result.rho},
                                {"p_value", c.result.p_value},
                                {"n", c.result.n},
                                {"significant", c.result.significant},
                                {"significant_splits", c.significant_splits},
                                {"n_splits", c.n_splits}});
  }
  j["listings"] = nlohmann::json::array();
  for (const auto& l : r.listings) {
    j["listings"].push_back(
        {{"condition", to_string(l.condition)}, {"feminine", scores_json(l.feminine)}, {"masculine", scores_json(l.masculine)}});
  }
  j["diagnostics"] = r.diagnostics;
  return j;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  try {
    ExperimentReport r;
    r.language = j.at("language").get<std::string>();
    r.baseline = j.at("baseline").get<double>();
    for (const auto& a : j.at("accuracy")) {
      r.accuracies.push_back({condition_from_json(a.at("condition")), a.at("accuracy").get<double>(),
                              a.at("baseline").get<double>(), a.at("p_value").get<double>(),
                              a.at("significant").get<bool>(), a.at("significant_splits").get<int>(),
                              a.at("n_splits").get<int>()});
    }
    for (const auto& c : j.at("correlation")) {
      CorrelationResult cr{c.at("rho").get<double>(), c.at("p_value").get<double>(), c.at("n").get<std::size_t>(),
                           c.at("significant").get<bool>()};
      r.correlations.push_back(
          {condition_from_json(c.at("condition")), cr, c.at("significant_splits").get<int>(), c.at("n_splits").get<int>()});
    }
    for (const auto& l : j.at("listings")) {
      r.listings.push_back(
          {condition_from_json(l.at("condition")), scores_from_json(l.at("feminine")), scores_from_json(l.at("masculine"))});
    }
    if (j.contains("diagnostics")) r.diagnostics = j.at("diagnostics").get<std::map<std::string, long long>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

std::string render_report(const ExperimentReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::tsv: return render_tsv(report);
    case ReportFormat::json: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::table: return render_table(report);
  }
  return {};
}

std::string render_reports(const std::vector<ExperimentReport>& reports, ReportFormat format) {
  if (format == ReportFormat::json) {
    auto a = nlohmann::json::array();
    for (const auto& r : reports) a.push_back(report_to_json(r));
    return a.dump(2) + "\n";
  }
  std::string out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i) out += '\n';
    out += render_report(reports[i], format);
  }
  return out;
}

}  // namespace genprobe
