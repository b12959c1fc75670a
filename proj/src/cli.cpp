#include "genprobe/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "genprobe/classifier.hpp"
#include "genprobe/corpus.hpp"
#include "genprobe/embeddings.hpp"
#include "genprobe/error.hpp"
#include "genprobe/lexicon.hpp"
#include "genprobe/pipeline.hpp"
#include "genprobe/report.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/synth.hpp"
#include "genprobe/text.hpp"
#include "genprobe/ultradense.hpp"

namespace genprobe {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

// Writes `text` to `path`, or to `out` when no path is given.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << text;
}

ExperimentConfig optional_config(const std::string& path) {
  if (path.empty()) return {};
  return load_experiment_config(path);
}

ConditionKind condition_or_throw(const std::string& name) {
  auto c = parse_condition(name);
  if (!c) throw ConfigError("unknown condition '" + name + "' (expected forms, lemmata, nouns or not_nouns)");
  return *c;
}

ReportFormat format_or_throw(const std::string& name) {
  auto f = parse_report_format(name);
  if (!f) throw ConfigError("unknown format '" + name + "' (expected tsv, json or table)");
  return *f;
}

std::vector<LabeledLemma> read_labeled_file(const std::string& path) {
  auto in = open_input(path);
  return read_labeled(in);
}

struct Options {
  std::string config, language, condition, format = "table", out, in, spec;
  std::string vectors, model, train, dev, test, lemmas, concepts, eval_out, scores_out, log;
  std::vector<std::string> inputs, languages;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<int> jobs, dim, window, negatives, epochs, workers, iterations;
  std::optional<std::uint64_t> min_count, min_occurrences;
  std::optional<double> step;
  int shuffles = 10'000;
};

int cmd_synth(const Options& o, std::ostream& out) {
  SynthSpec spec;
  if (!o.spec.empty()) {
    auto in = open_input(o.spec);
    spec = parse_synth_spec(in);
  }
  if (o.seed) spec.seed = *o.seed;
  if (!o.language.empty()) spec.language = o.language;
  const SynthOutput s = generate_corpus(spec);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  {
    std::ofstream c(dir / "corpus.tsv", std::ios::binary);
    write_tagged_corpus(s.corpus, c);
    std::ofstream t(dir / "truth.tsv", std::ios::binary);
    write_ground_truth(s.truth, t);
    std::ofstream k(dir / "concepts.tsv", std::ios::binary);
    write_concepts(s.concepts, k);
    std::ofstream p(dir / "spec.txt", std::ios::binary);
    write_synth_spec(spec, p);
    if (!c || !t || !k || !p) throw DataError("cannot write synthetic corpus to " + o.out);
  }
  out << "wrote " << s.corpus.sentences.size() << " sentences, " << s.truth.genders.size() << " nouns, "
      << s.concepts.size() << " concepts to " << o.out << '\n';
  return 0;
}

int cmd_condition(const Options& o, std::ostream& out) {
  const TaggedCorpus corpus = read_tagged_corpus(o.in, ParseOptions{o.language});
  const TokenStream stream = apply_condition(corpus, condition_or_throw(o.condition));
  std::ostringstream text;
  write_token_stream(stream, text);
  emit(o.out, text.str(), out);
  return 0;
}

int cmd_embed(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = optional_config(o.config);
  SgnsConfig s = cfg.sgns;
  std::uint64_t min_count = cfg.min_count;
  if (o.seed) s.seed = *o.seed;
  if (o.dim) s.dim = *o.dim;
  if (o.window) s.window = *o.window;
  if (o.negatives) s.negatives = *o.negatives;
  if (o.epochs) s.epochs = *o.epochs;
  if (o.workers) s.workers = *o.workers;
  if (o.min_count) min_count = *o.min_count;
  if (o.deterministic) s.workers = 1;
  auto in = open_input(o.in);
  const TokenStream stream = read_token_stream(in);
  const Vocabulary vocab = build_vocab(stream, min_count);
  TrainingLog log;
  const EmbeddingTable table = train_sgns(stream, vocab, s, &log);
  save_vectors(table, fs::path(o.out));
  for (const auto& e : log.epochs) {
    out << "epoch " << e.epoch << " mean loss " << format_double(e.mean_loss, 6) << " pairs " << e.pairs << '\n';
  }
  out << "wrote " << table.size() << " vectors of dimension " << table.dim() << " to " << o.out << '\n';
  return 0;
}

int cmd_lexicon(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = optional_config(o.config);
  const std::uint64_t threshold = o.min_occurrences.value_or(cfg.lexicon.min_occurrences);
  const TaggedCorpus corpus = read_tagged_corpus(o.in, ParseOptions{o.language});
  ExtractionStats stats;
  const GenderLexicon lexicon = extract_gender_lexicon(corpus, threshold, &stats);
  std::ostringstream text;
  write_gender_lexicon(lexicon, text);
  emit(o.out, text.str(), out);
  if (!o.concepts.empty()) {
    auto in = open_input(o.concepts);
    std::vector<LabeledLemma> eval;
    for (const auto& c : filter_inanimate(load_concepts(in))) {
      const std::string lemma = fold_case(c.lemma);
      std::optional<Gender> g = c.gold_gender;
      if (!g) {
        if (auto it = lexicon.find(lemma); it != lexicon.end()) g = it->second.gender;
      }
      if (g && *g != Gender::neuter) eval.push_back({lemma, *g});
    }
    std::ostringstream e;
    write_labeled(eval, e);
    emit(o.eval_out, e.str(), out);
  }
  if (!o.out.empty()) {
    out << lexicon.size() << " lemmas (" << stats.ties << " ties, " << stats.neuter_dropped << " neuter dropped, "
        << stats.below_threshold << " below threshold)\n";
  }
  return 0;
}

int cmd_classify(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = optional_config(o.config);
  TrainSpec spec = cfg.classifier.spec;
  if (o.seed) spec.seed = *o.seed;
  if (o.epochs) spec.epochs = *o.epochs;
  if (o.step) spec.step_size = *o.step;
  const EmbeddingTable table = load_vectors(fs::path(o.vectors));
  const LabeledMatrix train = gather(read_labeled_file(o.train), table);
  const LabeledMatrix dev = gather(read_labeled_file(o.dev), table);
  const SweepResult sweep = sweep_hyperparameters(train, dev, cfg.classifier.grid, spec);
  std::ostringstream model;
  save_mlp(sweep.best_run.best, model);
  emit(o.out, model.str(), out);
  if (!o.log.empty()) {
    std::ostringstream log;
    write_sweep_log(sweep.log, log);
    emit(o.log, log.str(), out);
  }
  if (!o.out.empty()) {
    out << "best depth " << sweep.best_shape.depth << " hidden " << sweep.best_shape.hidden << " "
        << to_string(sweep.best_shape.nonlinearity) << " epoch " << sweep.best_run.best_epoch << " dev accuracy "
        << format_double(sweep.best_run.best_dev_accuracy, 4) << '\n';
  }
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const EmbeddingTable table = load_vectors(fs::path(o.vectors));
  auto in = open_input(o.model);
  const MlpParams model = load_mlp(in);
  if (model.input_dim() != table.dim()) {
    throw DimensionError("model expects " + std::to_string(model.input_dim()) + "-dimensional vectors, file has " +
                         std::to_string(table.dim()));
  }
  const auto test = read_labeled_file(o.test);
  const AccuracyResult acc = evaluate_accuracy(model, table, test);
  std::vector<Gender> labels;
  for (const auto& l : test) labels.push_back(l.gender);
  const Gender majority = majority_class(labels);
  std::vector<bool> baseline_correct;
  for (Gender g : labels) baseline_correct.push_back(g == majority);
  const double p = accuracy_significance(acc.correct, baseline_correct, o.shuffles, o.seed.value_or(1));
  std::ostringstream text;
  text << "accuracy\t" << format_double(acc.accuracy, 4) << "\nbaseline\t" << format_double(majority_baseline(labels), 4)
       << "\np_value\t" << format_double(p, 4) << "\nn\t" << test.size() << '\n';
  emit(o.out, text.str(), out);
  return 0;
}

int cmd_densify(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = optional_config(o.config);
  DensifierConfig dc = cfg.densifier.config;
  if (o.seed) dc.seed = *o.seed;
  if (o.iterations) dc.iterations = *o.iterations;
  if (o.step) dc.step_size = *o.step;
  const EmbeddingTable table = load_vectors(fs::path(o.vectors));
  const auto lemmas = read_labeled_file(o.lemmas);
  PairSetOptions po = cfg.densifier.pairs;
  po.seed = dc.seed;
  const PairSets pairs = build_pair_sets(lemmas, po);
  const OrthogonalTransform q = train_densifier(table, pairs, dc);
  std::ostringstream text;
  save_transform(q, {q.dim(), dc.iterations, dc.seed}, text);
  emit(o.out, text.str(), out);
  if (!o.test.empty()) {
    const auto scored = score_lemmas(q, table, read_labeled_file(o.test));
    if (!o.scores_out.empty()) {
      std::ostringstream s;
      write_scores(scored, s);
      emit(o.scores_out, s.str(), out);
    }
    std::vector<double> scores;
    std::vector<Gender> labels;
    for (const auto& s : scored) {
      scores.push_back(s.score);
      labels.push_back(s.gold);
    }
    const auto r = correlate_scores(scores, labels, cfg.densifier.n_permutations, dc.seed);
    out << "rho\t" << format_double(r.rho, 4) << "\np_value\t" << format_double(r.p_value, 4) << "\nn\t" << r.n << '\n';
  }
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  std::vector<ExperimentReport> reports;
  for (const auto& path : o.inputs) {
    auto in = open_input(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    if (j.is_array()) {
      for (const auto& r : j) reports.push_back(report_from_json(r));
    } else {
      reports.push_back(report_from_json(j));
    }
  }
  if (!o.config.empty()) {
    const ExperimentConfig cfg = load_experiment_config(o.config);
    for (const auto& l : cfg.languages) {
      if (!o.language.empty() && l.code != o.language) continue;
      const fs::path p = cfg.output / l.code / "report" / "report.json";
      auto in = open_input(p.string());
      reports.push_back(report_from_json(nlohmann::json::parse(in)));
    }
  }
  if (reports.empty()) throw ConfigError("report: give --in files or --config");
  emit(o.out, render_reports(reports, format_or_throw(o.format)), out);
  return 0;
}

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (o.jobs) cfg.jobs = *o.jobs;
  std::vector<std::string> wanted = o.languages;
  if (!o.language.empty()) wanted.push_back(o.language);
  if (!wanted.empty()) {
    std::vector<LanguageInputs> keep;
    for (const auto& code : wanted) {
      auto it = std::find_if(cfg.languages.begin(), cfg.languages.end(), [&](const auto& l) { return l.code == code; });
      if (it == cfg.languages.end()) throw ConfigError("language '" + code + "' is not in the config");
      keep.push_back(*it);
    }
    cfg.languages = std::move(keep);
  }
  const ReportFormat format = format_or_throw(o.format);
  const PipelineResult result = run_pipeline(cfg);
  std::vector<ExperimentReport> reports;
  for (const auto& l : result.languages) {
    if (l.report) reports.push_back(*l.report);
    if (l.exit_code != 0) err << "error: " << l.language << ": stage " << l.failed_stage << ": " << l.error << '\n';
  }
  if (!reports.empty()) emit(o.out, render_reports(reports, format), out);
  err << "stages executed: " << result.executed_total() << " of " << result.stages.size() << '\n';
  return result.exit_code();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probe word embeddings for grammatical gender under lemmatization conditions"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };
  auto add_config = [&](CLI::App* c, bool required = false) {
    auto* opt = c->add_option("--config", o.config, "Experiment config file")->check(CLI::ExistingFile);
    if (required) opt->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic tagged corpus");
  synth->add_option("--spec", o.spec, "Synthetic spec file (key = value)")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--language", o.language, "Language code written to the corpus header");
  add_seed(synth);

  auto* condition = app.add_subcommand("condition", "Rewrite a tagged corpus under a lemmatization condition");
  condition->add_option("--in", o.in, "Tagged corpus")->required()->check(CLI::ExistingFile);
  condition->add_option("--condition,--kind", o.condition, "forms, lemmata, nouns or not_nouns")->required();
  condition->add_option("--language", o.language, "Expected corpus language");
  condition->add_option("--out", o.out, "Token stream output (default stdout)");

  auto* embed = app.add_subcommand("embed", "Train skip-gram embeddings on a token stream");
  embed->add_option("--in", o.in, "Token stream")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", o.out, "Vector file")->required();
  add_config(embed);
  add_seed(embed);
  embed->add_flag("--deterministic", o.deterministic, "Single worker, reproducible output");
  embed->add_option("--dim", o.dim, "Embedding dimension");
  embed->add_option("--window", o.window, "Context window");
  embed->add_option("--negatives", o.negatives, "Negative samples per pair");
  embed->add_option("--epochs", o.epochs, "Training epochs");
  embed->add_option("--workers", o.workers, "Training threads");
  embed->add_option("--min-count", o.min_count, "Minimum type frequency");

  auto* lexicon = app.add_subcommand("lexicon", "Extract the noun gender lexicon from a tagged corpus");
  lexicon->add_option("--in", o.in, "Tagged corpus")->required()->check(CLI::ExistingFile);
  lexicon->add_option("--out", o.out, "Lexicon output (default stdout)");
  lexicon->add_option("--language", o.language, "Expected corpus language");
  lexicon->add_option("--min-occurrences", o.min_occurrences, "Support threshold");
  lexicon->add_option("--concepts", o.concepts, "Concept file; writes labelled inanimate lemmas")->check(CLI::ExistingFile);
  lexicon->add_option("--eval-out", o.eval_out, "Output for labelled concept lemmas");
  add_config(lexicon);

  auto* classify = app.add_subcommand("classify", "Sweep MLP classifiers and save the dev-best model");
  classify->add_option("--vectors", o.vectors, "Vector file")->required()->check(CLI::ExistingFile);
  classify->add_option("--train", o.train, "Labelled training lemmas")->required()->check(CLI::ExistingFile);
  classify->add_option("--dev", o.dev, "Labelled dev lemmas")->required()->check(CLI::ExistingFile);
  classify->add_option("--out", o.out, "Model output (default stdout)");
  classify->add_option("--log", o.log, "Sweep log output");
  classify->add_option("--epochs", o.epochs, "Training epochs");
  classify->add_option("--step", o.step, "Adam step size");
  add_config(classify);
  add_seed(classify);

  auto* evaluate = app.add_subcommand("evaluate", "Score a saved model on labelled test lemmas");
  evaluate->add_option("--vectors", o.vectors, "Vector file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", o.model, "Saved model")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--test", o.test, "Labelled test lemmas")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--shuffles", o.shuffles, "Randomization shuffles");
  evaluate->add_option("--out", o.out, "Output (default stdout)");
  add_seed(evaluate);

  auto* densify = app.add_subcommand("densify", "Learn the orthogonal gender rotation");
  densify->add_option("--vectors", o.vectors, "Vector file")->required()->check(CLI::ExistingFile);
  densify->add_option("--lemmas", o.lemmas, "Labelled training lemmas")->required()->check(CLI::ExistingFile);
  densify->add_option("--out", o.out, "Transform output (default stdout)");
  densify->add_option("--test", o.test, "Labelled lemmas to score")->check(CLI::ExistingFile);
  densify->add_option("--scores-out", o.scores_out, "Score output");
  densify->add_option("--iterations", o.iterations, "Iterations");
  densify->add_option("--step", o.step, "Adam step size");
  add_config(densify);
  add_seed(densify);

  auto* report = app.add_subcommand("report", "Render stored reports");
  report->add_option("--in", o.inputs, "report.json files")->check(CLI::ExistingFile);
  add_config(report);
  report->add_option("--language", o.language, "Only this language (with --config)");
  report->add_option("--format", o.format, "tsv, json or table");
  report->add_option("--out", o.out, "Output (default stdout)");

  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  add_config(run, true);
  run->add_option("--language", o.languages, "Restrict to these languages");
  add_seed(run);
  run->add_flag("--deterministic", o.deterministic, "Single-worker embedding training");
  run->add_option("--jobs", o.jobs, "Worker threads");
  run->add_option("--format", o.format, "tsv, json or table");
  run->add_option("--out", o.out, "Report output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (condition->parsed()) return cmd_condition(o, out);
    if (embed->parsed()) return cmd_embed(o, out);
    if (lexicon->parsed()) return cmd_lexicon(o, out);
    if (classify->parsed()) return cmd_classify(o, out);
    if (evaluate->parsed()) return cmd_evaluate(o, out);
    if (densify->parsed()) return cmd_densify(o, out);
    if (report->parsed()) return cmd_report(o, out);
    if (run->parsed()) return cmd_run(o, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace genprobe
