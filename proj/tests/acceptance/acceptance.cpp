// End-to-end acceptance runner: one PASS/FAIL line per criterion.
// Usage: genprobe_acceptance <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genprobe/classifier.hpp"
#include "genprobe/corpus.hpp"
#include "genprobe/embeddings.hpp"
#include "genprobe/experiment.hpp"
#include "genprobe/lexicon.hpp"
#include "genprobe/pipeline.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/synth.hpp"
#include "genprobe/ultradense.hpp"
#include "genprobe/vocabulary.hpp"

using namespace genprobe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_language(const SynthOutput& synth, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream corpus(dir / "corpus.tsv", std::ios::binary);
  write_tagged_corpus(synth.corpus, corpus);
  std::ofstream concepts(dir / "concepts.tsv", std::ios::binary);
  write_concepts(synth.concepts, concepts);
}

ExperimentConfig config_for(const fs::path& data, const fs::path& out, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.languages.push_back({"xx", data / "corpus.tsv", data / "concepts.tsv"});
  cfg.output = out;
  cfg.seed = seed;
  cfg.deterministic = true;
  return cfg;
}

const AccuracyRow& accuracy_row(const ExperimentReport& r, ConditionKind k) {
  return *std::find_if(r.accuracies.begin(), r.accuracies.end(), [&](const auto& a) { return a.condition == k; });
}

const CorrelationRow& correlation_row(const ExperimentReport& r, ConditionKind k) {
  return *std::find_if(r.correlations.begin(), r.correlations.end(), [&](const auto& c) { return c.condition == k; });
}

// Reference synthetic language: 400 nouns, balanced, concord, 200k sentences.
SynthSpec control_spec(double beta, std::uint64_t seed) {
  SynthSpec s;
  s.n_noun_lemmas = 400;
  s.gender_balance = 0.5;
  s.concord = true;
  s.whorf_strength = beta;
  s.n_sentences = 200'000;
  s.language = "xx";
  s.seed = seed;
  return s;
}

// ---- criteria on the beta = 0 control corpus --------------------------------

struct ControlRun {
  ExperimentReport report;
  double seconds = 0.0;
  SynthOutput synth;
};

Verdict positive_control(const ControlRun& run) {
  const auto& forms = accuracy_row(run.report, ConditionKind::forms);
  const double margin = forms.accuracy - run.report.baseline;
  Verdict v;
  v.pass = forms.accuracy >= 0.90 && margin >= 0.30 && run.seconds < 600.0;
  v.detail = "forms accuracy " + fmt(forms.accuracy) + " (>= 0.90), baseline " + fmt(run.report.baseline) +
             ", margin " + fmt(margin) + " (>= 0.30), pipeline for all four conditions " + fmt(run.seconds, 1) +
             " s (< 600)";
  return v;
}

Verdict null_control(const ControlRun& run) {
  const auto& lem = accuracy_row(run.report, ConditionKind::lemmata);
  const int insignificant = lem.n_splits - lem.significant_splits;
  const double gap = lem.accuracy - lem.baseline;
  Verdict v;
  v.pass = std::abs(gap) <= 0.05 && insignificant >= 9;
  v.detail = "lemmata accuracy " + fmt(lem.accuracy) + " vs baseline " + fmt(lem.baseline) + " (|gap| " +
             fmt(std::abs(gap)) + " <= 0.05), splits with p >= 0.05: " + std::to_string(insignificant) + "/" +
             std::to_string(lem.n_splits) + " (>= 9)";
  return v;
}

Verdict densifier_pattern(const ControlRun& run) {
  Verdict v{true, ""};
  for (ConditionKind k : kAllConditions) {
    const auto& c = correlation_row(run.report, k);
    const bool gendered = k == ConditionKind::forms || k == ConditionKind::nouns;
    const bool ok = gendered ? std::abs(c.result.rho) >= 0.7 && c.result.p_value < 0.05 : c.result.p_value >= 0.05;
    v.pass = v.pass && ok;
    v.detail += std::string(v.detail.empty() ? "" : ", ") + std::string(to_string(k)) + " rho " + fmt(c.result.rho) +
                " p " + fmt(c.result.p_value) + (gendered ? " (|rho| >= 0.7, p < 0.05)" : " (p >= 0.05)");
  }
  return v;
}

// ---- criterion 3: injected context effect, lemmata only ----------------------

Verdict whorf_injection(const fs::path& work) {
  const std::uint64_t seed = 11;
  const auto synth = generate_corpus(control_spec(0.6, 2024));
  write_language(synth, work / "whorf");
  const ExperimentConfig cfg = config_for(work / "whorf", work / "whorf" / "out", seed);

  const TokenStream stream = apply_condition(synth.corpus, ConditionKind::lemmata);
  const Vocabulary vocab = build_vocab(stream, cfg.min_count);
  SgnsConfig sgns = cfg.sgns;
  sgns.seed = run_seed(seed, "xx", "sgns", "lemmata");
  sgns.workers = 1;
  const EmbeddingTable table = train_sgns(stream, vocab, sgns);
  const LanguageLexicon lexicon =
      prepare_lexicon(synth.corpus, synth.concepts, {&vocab}, cfg.lexicon, run_seed(seed, "xx", "splits"));
  const ClassifierOutcome outcome =
      run_classifier_experiment(table, lexicon, cfg.classifier, run_seed(seed, "xx", "classifier", "lemmata"));

  std::vector<double> acc, base, p;
  for (const auto& s : outcome.splits) acc.push_back(s.accuracy), base.push_back(s.baseline), p.push_back(s.p_value);
  const double merged = merge_p_values(p);
  const int significant = static_cast<int>(std::count_if(p.begin(), p.end(), [](double x) { return x < 0.05; }));
  Verdict v;
  v.pass = mean(acc) > mean(base) && merged < 0.05;
  v.detail = "beta 0.6 lemmata accuracy " + fmt(mean(acc)) + " vs baseline " + fmt(mean(base)) + ", merged p " +
             fmt(merged) + " (< 0.05), significant splits " + std::to_string(significant) + "/" +
             std::to_string(p.size());
  return v;
}

// ---- criterion 5: numerical suite -------------------------------------------

double norm_relative(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

double sgns_gradient_error() {
  Rng rng(101);
  double worst = 0.0;
  const double h = 1e-6;
  for (int point = 0; point < 10; ++point) {
    const int d = 10;
    std::vector<double> u(d), c(d);
    for (int i = 0; i < d; ++i) u[i] = 0.5 * rng.normal(), c[i] = 0.5 * rng.normal();
    const PairLabel label = point % 2 ? PairLabel::negative : PairLabel::positive;
    const auto r = sgns_pair_loss<double>(u, c, label);
    Eigen::VectorXd analytic(2 * d), numeric(2 * d);
    for (int i = 0; i < d; ++i) {
      analytic(i) = r.grad_center[i];
      analytic(d + i) = r.grad_context[i];
      auto up = u, um = u, cp = c, cm = c;
      up[i] += h, um[i] -= h, cp[i] += h, cm[i] -= h;
      numeric(i) = (sgns_pair_loss<double>(up, c, label).loss - sgns_pair_loss<double>(um, c, label).loss) / (2 * h);
      numeric(d + i) = (sgns_pair_loss<double>(u, cp, label).loss - sgns_pair_loss<double>(u, cm, label).loss) / (2 * h);
    }
    worst = std::max(worst, norm_relative(analytic, numeric));
  }
  return worst;
}

double mlp_gradient_error() {
  Rng rng(202);
  double worst = 0.0;
  const double h = 1e-6;
  for (Nonlinearity nl : {Nonlinearity::tanh, Nonlinearity::sigmoid, Nonlinearity::relu}) {
    for (int depth : {1, 3}) {
      for (int point = 0; point < 10; ++point) {
        const MlpParams params = init_mlp(5, {depth, 6, nl}, rng.below(1u << 30));
        Eigen::MatrixXd x(5, 8);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        std::vector<int> y(8);
        for (auto& v : y) v = static_cast<int>(rng.below(2));
        std::vector<DenseLayer> grads;
        mlp_loss_and_grad(params, x, y, &grads);
        std::vector<double> analytic, numeric;
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
          const auto& w = params.layers[l].weight;
          for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
              MlpParams p = params, m = params;
              p.layers[l].weight(i, j) += h;
              m.layers[l].weight(i, j) -= h;
              analytic.push_back(grads[l].weight(i, j));
              numeric.push_back((mlp_loss_and_grad(p, x, y, nullptr) - mlp_loss_and_grad(m, x, y, nullptr)) / (2 * h));
            }
            MlpParams p = params, m = params;
            p.layers[l].bias(i) += h;
            m.layers[l].bias(i) -= h;
            analytic.push_back(grads[l].bias(i));
            numeric.push_back((mlp_loss_and_grad(p, x, y, nullptr) - mlp_loss_and_grad(m, x, y, nullptr)) / (2 * h));
          }
        }
        worst = std::max(worst, norm_relative(Eigen::Map<Eigen::VectorXd>(analytic.data(), analytic.size()),
                                              Eigen::Map<Eigen::VectorXd>(numeric.data(), numeric.size())));
      }
    }
  }
  return worst;
}

struct PlantedSet {
  Eigen::MatrixXd vectors;
  std::vector<LabeledLemma> lemmas;
};

PlantedSet planted(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  PlantedSet p{Eigen::MatrixXd(d, n), {}};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) p.vectors(k, i) = rng.normal();
    p.vectors(3 % d, i) = i % 2 ? -1.0 : 1.0;
    p.lemmas.push_back({"l" + std::to_string(i), i % 2 ? Gender::feminine : Gender::masculine});
  }
  return p;
}

Eigen::MatrixXd random_orthogonal(Rng& rng, int d) {
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  for (int j = 0; j < d; ++j)
    if (qr.matrixQR()(j, j) < 0) q.col(j) *= -1;
  return q;
}

double densifier_gradient_error() {
  Rng rng(303);
  const auto p = planted(12, 6, 4);
  const auto pairs = build_pair_sets(p.lemmas);
  double worst = 0.0;
  const double h = 1e-6;
  for (int point = 0; point < 10; ++point) {
    OrthogonalTransform t{random_orthogonal(rng, 6), point % 6};
    t.q += 0.1 * Eigen::MatrixXd::Random(6, 6);  // off the manifold too
    const Eigen::MatrixXd g = objective_gradient(t, p.vectors, pairs.same, pairs.diff);
    Eigen::MatrixXd fd(6, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        OrthogonalTransform a = t, b = t;
        a.q(i, j) += h;
        b.q(i, j) -= h;
        fd(i, j) = (objective_value(a, p.vectors, pairs.same, pairs.diff) -
                    objective_value(b, p.vectors, pairs.same, pairs.diff)) /
                   (2 * h);
      }
    }
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), fd.norm()));
  }
  return worst;
}

Verdict numerical_suite() {
  const auto t0 = Clock::now();
  const double sgns = sgns_gradient_error();
  const double mlp = mlp_gradient_error();
  const double dens = densifier_gradient_error();

  const auto p = planted(200, 20, 5);
  DensifierConfig cfg;
  cfg.seed = 6;
  double ortho = 0.0;
  int projections = 0;
  const auto trained = train_densifier(p.vectors, build_pair_sets(p.lemmas), cfg, [&](int, const Eigen::MatrixXd& q) {
    ortho = std::max(ortho, orthogonality_error(q));
    ++projections;
  });
  Rng rng(7);
  double cos_err = 0.0, norm_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd u(20), v(20);
    for (int k = 0; k < 20; ++k) u(k) = rng.normal(), v(k) = rng.normal();
    const Eigen::VectorXd qu = trained.q * u, qv = trained.q * v;
    cos_err = std::max(cos_err, std::abs(qu.dot(qv) / (qu.norm() * qv.norm()) - u.dot(v) / (u.norm() * v.norm())));
    norm_err = std::max(norm_err, std::abs(qu.norm() - u.norm()));
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = sgns < 1e-4 && mlp < 1e-4 && dens < 1e-5 && ortho <= 1e-6 && projections == cfg.iterations &&
           cos_err <= 1e-6 && secs < 60.0;
  v.detail = "sgns grad err " + fmt(sgns, 10) + ", mlp grad err " + fmt(mlp, 10) + " (< 1e-4), densifier grad err " +
             fmt(dens, 10) + " (< 1e-5), max |QtQ-I| " + fmt(ortho, 15) + " over " + std::to_string(projections) +
             " projections, cosine err " + fmt(cos_err, 15) + ", norm err " + fmt(norm_err, 15) + ", " +
             fmt(secs, 1) + " s (< 60)";
  return v;
}

// ---- criterion 6: oracle equivalence ----------------------------------------

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) less += w < v[i], equal += w == v[i];
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Verdict oracle_equivalence(const ControlRun& control) {
  Rng rng(404);
  double rho_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.below(80);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = t % 3 ? rng.normal() : std::round(3 * rng.normal());
      y[i] = static_cast<double>(rng.below(2));
    }
    y[0] = 0, y[1] = 1, x[0] = -50, x[1] = 50;
    rho_err = std::max(rho_err, std::abs(spearman_rho(x, y) - oracle_spearman(x, y)));
  }

  int svd_wins = 0;
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd m(4, 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
    const double ours = (m - svd_orthogonalize(m)).norm();
    bool beaten = false;
    for (int c = 0; c < 100'000 && !beaten; ++c) {
      Eigen::MatrixXd omega = random_orthogonal(rng, 4);
      if (c % 2) omega.col(0) *= -1;
      beaten = (m - omega).norm() < ours;
    }
    svd_wins += !beaten;
  }

  const GenderLexicon lex = extract_gender_lexicon(control.synth.corpus, ExperimentConfig{}.lexicon.min_occurrences);
  std::size_t agree = 0;
  for (const auto& [lemma, g] : control.synth.truth.genders) {
    auto it = lex.find(lemma);
    agree += it != lex.end() && it->second.gender == g;
  }
  const bool lexicon_equal = agree == control.synth.truth.genders.size() && lex.size() == agree;

  Verdict v;
  v.pass = rho_err <= 1e-12 && svd_wins == 20 && lexicon_equal;
  v.detail = "max |rho - oracle| " + fmt(rho_err, 16) + " (<= 1e-12), svd unbeaten on " + std::to_string(svd_wins) +
             "/20 inputs by 1e5 candidates, lexicon " + std::to_string(lex.size()) + " entries with " +
             std::to_string(agree) + "/" + std::to_string(control.synth.truth.genders.size()) + " matching truth";
  return v;
}

// ---- criterion 7: determinism -------------------------------------------------

Verdict determinism(const fs::path& work) {
  SynthSpec spec = control_spec(0.0, 515);
  spec.n_noun_lemmas = 120;
  spec.n_context_lemmas = 60;
  spec.n_sentences = 30'000;
  write_language(generate_corpus(spec), work / "det");
  std::vector<std::string> renders;
  for (const char* run : {"run1", "run2"}) {
    ExperimentConfig cfg = config_for(work / "det", work / "det" / run, 99);
    cfg.sgns.dim = 30;
    cfg.lexicon.min_occurrences = 20;
    cfg.lexicon.n_splits = 4;
    cfg.classifier.grid = {{1, 2}, {50}, {Nonlinearity::tanh}};
    cfg.classifier.n_shuffles = 2000;
    cfg.densifier.config.iterations = 300;
    cfg.densifier.n_permutations = 2000;
    const auto result = run_pipeline(cfg);
    if (result.exit_code() != 0) return {false, std::string(run) + " failed: " + result.languages[0].error};
    std::string all;
    for (const char* f : {"report.json", "report.tsv", "report.txt"}) all += read_file(cfg.output / "xx" / "report" / f);
    renders.push_back(all);
  }
  Verdict v;
  v.pass = !renders[0].empty() && renders[0] == renders[1];
  v.detail = "two independent deterministic runs, report bytes " + std::to_string(renders[0].size()) + " vs " +
             std::to_string(renders[1].size()) + (v.pass ? ", identical" : ", different");
  return v;
}

Verdict guarded(const std::function<Verdict()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "genprobe-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<std::pair<int, Verdict>> verdicts;
  auto report = [&](int id, const Verdict& v) {
    std::cout << "criterion " << id << ' ' << (v.pass ? "PASS" : "FAIL") << ": " << v.detail << std::endl;
    verdicts.push_back({id, v});
  };

  ControlRun control;
  bool have_control = false;
  std::string control_error;
  try {
    control.synth = generate_corpus(control_spec(0.0, 2024));
    write_language(control.synth, work / "control");
    const auto t0 = Clock::now();
    const auto result = run_pipeline(config_for(work / "control", work / "control" / "out", 7));
    control.seconds = seconds_since(t0);
    if (result.exit_code() == 0 && result.languages[0].report) {
      control.report = *result.languages[0].report;
      have_control = true;
    } else {
      control_error = result.languages[0].failed_stage + ": " + result.languages[0].error;
    }
  } catch (const std::exception& e) {
    control_error = e.what();
  }
  const Verdict no_control{false, "control pipeline failed: " + control_error};

  report(1, have_control ? guarded([&] { return positive_control(control); }) : no_control);
  report(2, have_control ? guarded([&] { return null_control(control); }) : no_control);
  report(3, guarded([&] { return whorf_injection(work); }));
  report(4, have_control ? guarded([&] { return densifier_pattern(control); }) : no_control);
  report(5, guarded(numerical_suite));
  report(6, have_control ? guarded([&] { return oracle_equivalence(control); }) : no_control);
  report(7, guarded([&] { return determinism(work); }));

  const bool all = std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second.pass; });
  std::cout << (all ? "all criteria passed" : "some criteria failed") << std::endl;
  return all ? 0 : 1;
}
