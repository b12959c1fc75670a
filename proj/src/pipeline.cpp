#include "genprobe/pipeline.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <tuple>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "genprobe/error.hpp"
#include "genprobe/hash.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

class ConfigReader {
 public:
  ConfigReader(std::string section, std::string key, std::string value, std::size_t line)
      : section_(std::move(section)), key_(std::move(key)), value_(std::move(value)), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": [" + section_ + "] " + key_ + ": " + what);
  }

  long long integer() const {
    long long v = 0;
    auto r = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (r.ec != std::errc{} || r.ptr != value_.data() + value_.size()) fail("expected an integer, got '" + value_ + "'");
    return v;
  }
  int int32() const { return static_cast<int>(integer()); }
  std::uint64_t u64() const {
    std::uint64_t v = 0;
    auto r = std::from_chars(value_.data(), value_.data() + value_.size(), v);
    if (r.ec != std::errc{} || r.ptr != value_.data() + value_.size()) fail("expected an unsigned integer, got '" + value_ + "'");
    return v;
  }
  double real() const {
    try {
      std::size_t used = 0;
      const double v = std::stod(value_, &used);
      if (used != value_.size()) fail("expected a number, got '" + value_ + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("expected a number, got '" + value_ + "'");
    }
  }
  bool boolean() const {
    const std::string v = fold_case(value_);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    fail("expected true or false, got '" + value_ + "'");
  }
  std::vector<std::string> list() const {
    std::string s = value_;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::vector<std::string> out;
    for (auto item : split_whitespace(s)) out.emplace_back(item);
    if (out.empty()) fail("empty list");
    return out;
  }
  std::vector<int> int_list() const {
    std::vector<int> out;
    for (const auto& item : list()) {
      int v = 0;
      auto r = std::from_chars(item.data(), item.data() + item.size(), v);
      if (r.ec != std::errc{} || r.ptr != item.data() + item.size()) fail("bad list entry '" + item + "'");
      out.push_back(v);
    }
    return out;
  }
  const std::string& text() const { return value_; }

 private:
  std::string section_, key_, value_;
  std::size_t line_;
};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const fs::path& base_dir, const EnvLookup& env) {
  ExperimentConfig cfg;
  std::vector<std::string> language_order;
  std::map<std::string, LanguageInputs> languages;
  std::optional<std::vector<std::string>> selected;
  bool output_set = false;

  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
      section = fold_case(trim(t.substr(1, t.size() - 2)));
      if (section.rfind("language.", 0) == 0) {
        const std::string code = section.substr(9);
        if (code.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty language code");
        if (!languages.count(code)) {
          language_order.push_back(code);
          languages[code].code = code;
        }
      } else if (section != "experiment" && section != "vocab" && section != "sgns" && section != "lexicon" &&
                 section != "classifier" && section != "densifier" && section != "stats") {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": setting outside a section");
    const std::string key = fold_case(trim(t.substr(0, eq)));
    const ConfigReader v(section, key, std::string(trim(t.substr(eq + 1))), line_no);

    if (section == "experiment") {
      if (key == "output") cfg.output = resolve(v.text()), output_set = true;
      else if (key == "seed") cfg.seed = v.u64();
      else if (key == "deterministic") cfg.deterministic = v.boolean();
      else if (key == "jobs") cfg.jobs = v.int32();
      else if (key == "top_k") cfg.top_k = static_cast<std::size_t>(v.u64());
      else if (key == "languages") selected = v.list();
      else v.fail("unknown key");
    } else if (section.rfind("language.", 0) == 0) {
      auto& lang = languages[section.substr(9)];
      if (key == "corpus") lang.corpus = resolve(v.text());
      else if (key == "concepts") lang.concepts = resolve(v.text());
      else v.fail("unknown key");
    } else if (section == "vocab") {
      if (key == "min_count") cfg.min_count = v.u64();
      else v.fail("unknown key");
    } else if (section == "sgns") {
      auto& s = cfg.sgns;
      if (key == "dim") s.dim = v.int32();
      else if (key == "window") s.window = v.int32();
      else if (key == "negatives") s.negatives = v.int32();
      else if (key == "epochs") s.epochs = v.int32();
      else if (key == "initial_step") s.initial_step = v.real();
      else if (key == "subsample_threshold") s.subsample_threshold = v.real();
      else if (key == "workers") s.workers = v.int32();
      else if (key == "negative_table_size") s.negative_table_size = static_cast<std::size_t>(v.u64());
      else v.fail("unknown key");
    } else if (section == "lexicon") {
      if (key == "min_occurrences") cfg.lexicon.min_occurrences = v.u64();
      else if (key == "n_splits") cfg.lexicon.n_splits = v.int32();
      else v.fail("unknown key");
    } else if (section == "classifier") {
      auto& s = cfg.classifier.spec;
      auto& g = cfg.classifier.grid;
      if (key == "step_size") s.step_size = v.real();
      else if (key == "epochs") s.epochs = v.int32();
      else if (key == "batch_size") s.batch_size = v.int32();
      else if (key == "beta1") s.beta1 = v.real();
      else if (key == "beta2") s.beta2 = v.real();
      else if (key == "epsilon") s.epsilon = v.real();
      else if (key == "depths") g.depths = v.int_list();
      else if (key == "hidden_sizes") g.hidden_sizes = v.int_list();
      else if (key == "nonlinearities") {
        g.nonlinearities.clear();
        for (const auto& name : v.list()) {
          auto nl = parse_nonlinearity(name);
          if (!nl) v.fail("unknown nonlinearity '" + name + "'");
          g.nonlinearities.push_back(*nl);
        }
      } else v.fail("unknown key");
    } else if (section == "densifier") {
      auto& d = cfg.densifier.config;
      if (key == "iterations") d.iterations = v.int32();
      else if (key == "step_size") d.step_size = v.real();
      else if (key == "beta1") d.beta1 = v.real();
      else if (key == "beta2") d.beta2 = v.real();
      else if (key == "epsilon") d.epsilon = v.real();
      else if (key == "gender_axis") d.gender_axis = v.int32();
      else if (key == "enumerate_limit") cfg.densifier.pairs.enumerate_limit = static_cast<std::size_t>(v.u64());
      else if (key == "sample_size") cfg.densifier.pairs.sample_size = static_cast<std::size_t>(v.u64());
      else v.fail("unknown key");
    } else if (section == "stats") {
      if (key == "n_permutations") cfg.densifier.n_permutations = v.int32();
      else if (key == "n_shuffles") cfg.classifier.n_shuffles = v.int32();
      else v.fail("unknown key");
    }
  }

  std::vector<std::string> codes = selected ? *selected : language_order;
  for (const auto& code : codes) {
    auto it = languages.find(code);
    if (it == languages.end()) throw ConfigError("config: language '" + code + "' has no [language." + code + "] section");
    LanguageInputs lang = it->second;
    if (auto p = env("GENPROBE_CORPUS_" + upper(code))) lang.corpus = *p;
    if (auto p = env("GENPROBE_CONCEPTS_" + upper(code))) lang.concepts = *p;
    cfg.languages.push_back(std::move(lang));
  }
  if (auto p = env("GENPROBE_OUTPUT")) cfg.output = *p;
  else if (!output_set) cfg.output = base_dir / "out";
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), path.parent_path(), env);
}

void ExperimentConfig::validate() const {
  if (languages.empty()) throw ConfigError("config: no languages");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (!seen.insert(l.code).second) throw ConfigError("config: language '" + l.code + "' listed twice");
    if (l.corpus.empty()) throw ConfigError("config: language '" + l.code + "' has no corpus path");
    if (l.concepts.empty()) throw ConfigError("config: language '" + l.code + "' has no concepts path");
    if (!fs::exists(l.corpus)) throw ConfigError("config: corpus not found: " + l.corpus.string());
    if (!fs::exists(l.concepts)) throw ConfigError("config: concept file not found: " + l.concepts.string());
  }
  if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
  if (min_count < 1) throw ConfigError("config: min_count must be >= 1");
  sgns.validate();
  classifier.spec.validate();
  if (classifier.grid.configurations().empty()) throw ConfigError("config: empty classifier grid");
  if (classifier.n_shuffles < 1) throw ConfigError("config: n_shuffles must be >= 1");
  densifier.config.validate();
  if (densifier.config.gender_axis >= sgns.dim) throw ConfigError("config: gender_axis exceeds the embedding dimension");
  if (densifier.n_permutations < 1000) throw ConfigError("config: n_permutations must be >= 1000");
  if (lexicon.n_splits < 1) throw ConfigError("config: n_splits must be >= 1");
}

std::uint64_t run_seed(std::uint64_t global, const std::string& language, const std::string& what,
                       const std::string& condition) {
  return derive_seed(global, language + "/" + what + "/" + condition);
}

int PipelineResult::exit_code() const {
  int code = 0;
  for (const auto& l : languages) code = std::max(code, l.exit_code);
  return code;
}

std::size_t PipelineResult::executed(const std::string& stage) const {
  return static_cast<std::size_t>(
      std::count_if(stages.begin(), stages.end(), [&](const StageRecord& r) { return r.stage == stage && r.executed; }));
}

std::size_t PipelineResult::executed_total() const {
  return static_cast<std::size_t>(std::count_if(stages.begin(), stages.end(), [](const StageRecord& r) { return r.executed; }));
}

// ---------------------------------------------------------------- cache

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// A stage directory holding artifacts and a manifest of their hashes.
class StageDir {
 public:
  StageDir(fs::path dir, std::string stage, std::string key)
      : dir_(std::move(dir)), stage_(std::move(stage)), key_(std::move(key)) {}

  const fs::path& dir() const { return dir_; }
  const std::string& key() const { return key_; }
  fs::path file(const std::string& name) const { return dir_ / name; }

  // True when the manifest matches the key and every artifact hash checks out.
  bool valid() const {
    std::ifstream in(dir_ / "manifest.json");
    if (!in) return false;
    nlohmann::json m;
    try {
      in >> m;
      if (m.at("key").get<std::string>() != key_ || m.at("stage").get<std::string>() != stage_) return false;
      for (const auto& [name, hash] : m.at("artifacts").items()) {
        if (!fs::exists(dir_ / name) || sha256_file(dir_ / name) != hash.get<std::string>()) return false;
      }
    } catch (const std::exception&) {
      return false;
    }
    return true;
  }

  void begin() const {
    fs::create_directories(dir_);
    fs::remove(dir_ / "manifest.json");
  }

  void commit(const std::vector<std::string>& artifacts) const {
    nlohmann::json m;
    m["stage"] = stage_;
    m["key"] = key_;
    m["artifacts"] = nlohmann::json::object();
    for (const auto& a : artifacts) m["artifacts"][a] = sha256_file(dir_ / a);
    std::ofstream out(dir_ / "manifest.json");
    out << m.dump(2) << '\n';
    if (!out) throw DataError("cannot write manifest in " + dir_.string());
  }

 private:
  fs::path dir_;
  std::string stage_;
  std::string key_;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return in;
}

void write_config_fields(Sha256& h, const SgnsConfig& s) {
  h.field("sgns").field(std::to_string(s.dim)).field(std::to_string(s.window)).field(std::to_string(s.negatives));
  h.field(std::to_string(s.epochs)).field(shortest(s.initial_step)).field(shortest(s.subsample_threshold));
  h.field(std::to_string(s.seed)).field(std::to_string(s.workers)).field(std::to_string(s.negative_table_size));
}

void write_config_fields(Sha256& h, const ClassifierSettings& c) {
  const auto& s = c.spec;
  h.field("classifier").field(shortest(s.step_size)).field(std::to_string(s.epochs)).field(std::to_string(s.batch_size));
  h.field(shortest(s.beta1)).field(shortest(s.beta2)).field(shortest(s.epsilon)).field(std::to_string(c.n_shuffles));
  for (const auto& shape : c.grid.configurations()) {
    h.field(std::to_string(shape.depth) + "/" + std::to_string(shape.hidden) + "/" +
            std::string(to_string(shape.nonlinearity)));
  }
}

void write_config_fields(Sha256& h, const DensifierSettings& d) {
  const auto& c = d.config;
  h.field("densifier").field(std::to_string(c.iterations)).field(shortest(c.step_size)).field(shortest(c.beta1));
  h.field(shortest(c.beta2)).field(shortest(c.epsilon)).field(std::to_string(c.gender_axis));
  h.field(std::to_string(d.pairs.enumerate_limit)).field(std::to_string(d.pairs.sample_size));
  h.field(std::to_string(d.n_permutations));
}

// ---------------------------------------------------------------- artifacts

void write_splits(const std::vector<EvalSplit>& splits, std::ostream& out) {
  for (std::size_t k = 0; k < splits.size(); ++k) {
    out << "split\t" << k << '\t' << splits[k].split_seed << '\n';
    for (const auto& l : splits[k].dev) out << "dev\t" << l << '\n';
    for (const auto& l : splits[k].test) out << "test\t" << l << '\n';
  }
}

std::vector<EvalSplit> read_splits(std::istream& in) {
  std::vector<EvalSplit> splits;
  std::string line;
  while (std::getline(in, line)) {
    auto cols = split(line, '\t');
    if (cols.size() == 3 && cols[0] == "split") {
      EvalSplit s;
      s.split_seed = std::stoull(std::string(cols[2]));
      splits.push_back(std::move(s));
    } else if (cols.size() == 2 && !splits.empty() && cols[0] == "dev") {
      splits.back().dev.emplace_back(cols[1]);
    } else if (cols.size() == 2 && !splits.empty() && cols[0] == "test") {
      splits.back().test.emplace_back(cols[1]);
    } else if (!trim(line).empty()) {
      throw FormatError("splits file: unexpected line '" + line + "'");
    }
  }
  return splits;
}

void write_diagnostics(const std::map<std::string, long long>& d, std::ostream& out) {
  for (const auto& [k, v] : d) out << k << '\t' << v << '\n';
}

std::map<std::string, long long> read_diagnostics(std::istream& in) {
  std::map<std::string, long long> d;
  std::string line;
  while (std::getline(in, line)) {
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw FormatError("diagnostics file: bad line '" + line + "'");
    d[std::string(cols[0])] = std::stoll(std::string(cols[1]));
  }
  return d;
}

void write_accuracy(const std::vector<SplitAccuracy>& rows, std::ostream& out) {
  for (const auto& r : rows) {
    out << r.split_id << '\t' << shortest(r.accuracy) << '\t' << shortest(r.baseline) << '\t' << shortest(r.p_value)
        << '\t' << r.n_test << '\n';
  }
}

std::vector<SplitAccuracy> read_accuracy(std::istream& in) {
  std::vector<SplitAccuracy> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto c = split(line, '\t');
    if (c.size() != 5) throw FormatError("accuracy file: bad line '" + line + "'");
    rows.push_back({std::stoi(std::string(c[0])), std::stod(std::string(c[1])), std::stod(std::string(c[2])),
                    std::stod(std::string(c[3])), std::stoi(std::string(c[4]))});
  }
  return rows;
}

void write_correlation(const std::vector<SplitCorrelation>& rows, std::ostream& out) {
  for (const auto& r : rows) {
    out << r.split_id << '\t' << shortest(r.rho) << '\t' << shortest(r.p_value) << '\t' << r.n << '\n';
  }
}

std::vector<SplitCorrelation> read_correlation(std::istream& in) {
  std::vector<SplitCorrelation> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto c = split(line, '\t');
    if (c.size() != 4) throw FormatError("correlation file: bad line '" + line + "'");
    rows.push_back({std::stoi(std::string(c[0])), std::stod(std::string(c[1])), std::stod(std::string(c[2])),
                    std::stoi(std::string(c[3]))});
  }
  return rows;
}

std::vector<ScoredLemma> read_scores(std::istream& in) {
  std::vector<ScoredLemma> rows;
  std::string line;
  while (std::getline(in, line)) {
    auto c = split(line, '\t');
    if (c.size() != 3) throw FormatError("scores file: bad line '" + line + "'");
    auto g = parse_gender(c[2]);
    if (!g) throw FormatError("scores file: bad gender '" + std::string(c[2]) + "'");
    rows.push_back({std::string(c[0]), std::stod(std::string(c[1])), *g});
  }
  return rows;
}

// ---------------------------------------------------------------- runner

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 2;
}

// Runs fn(0..n-1) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

constexpr std::size_t kConditions = std::size(kAllConditions);

struct ConditionState {
  std::string condition_key, embed_key, classify_key, densify_key;
  bool condition_ran = false, embed_ran = false, classify_ran = false, densify_ran = false;
  std::optional<TokenStream> stream;
  std::optional<Vocabulary> vocab;
  std::optional<EmbeddingTable> table;
  long long lemma_fallbacks = 0;
  ConditionRun run;
};

class LanguageJob {
 public:
  LanguageJob(const ExperimentConfig& cfg, const LanguageInputs& inputs, std::vector<StageRecord>& records,
              std::mutex& records_mutex)
      : cfg_(cfg), in_(inputs), records_(records), records_mutex_(records_mutex), root_(cfg.output / inputs.code) {}

  bool failed() const {
    std::lock_guard lock(mutex_);
    return !error_.empty();
  }

  template <class Fn>
  void guarded(const std::string& stage, Fn&& fn) {
    if (failed()) return;
    try {
      fn();
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      if (error_.empty()) {
        failed_stage_ = stage;
        error_ = e.what();
        exit_code_ = exit_code_for(e);
      }
    }
  }

  void prepare() {
    corpus_hash_ = sha256_file(in_.corpus);
    concepts_hash_ = sha256_file(in_.concepts);
  }

  void condition_and_embed(std::size_t c) {
    guarded("condition", [&] { condition_stage(c); });
    guarded("embed", [&] { embed_stage(c); });
  }

  void lexicon_stage();
  void classify_and_densify(std::size_t c) {
    guarded("classify", [&] { classify_stage(c); });
    guarded("densify", [&] { densify_stage(c); });
  }
  void report_stage();
  void release_corpus() {
    std::lock_guard lock(corpus_mutex_);
    corpus_.reset();
  }

  LanguageResult result() const {
    LanguageResult r;
    r.language = in_.code;
    r.report = report_;
    r.failed_stage = failed_stage_;
    r.error = error_;
    r.exit_code = exit_code_;
    return r;
  }

 private:
  std::string cond_name(std::size_t c) const { return std::string(to_string(kAllConditions[c])); }

  void record(const std::string& stage, const std::string& condition, bool executed) {
    std::lock_guard lock(records_mutex_);
    records_.push_back({stage, in_.code, condition, executed});
  }

  const TaggedCorpus& corpus() {
    std::lock_guard lock(corpus_mutex_);
    if (!corpus_) corpus_ = read_tagged_corpus(in_.corpus.string(), ParseOptions{in_.code});
    return *corpus_;
  }

  void condition_stage(std::size_t c) {
    auto& st = cond_[c];
    Sha256 h;
    h.field("condition").field(corpus_hash_).field(in_.code).field(cond_name(c)).field(std::to_string(cfg_.min_count));
    st.condition_key = h.hex();
    StageDir dir(root_ / "condition" / cond_name(c), "condition", st.condition_key);
    const bool hit = dir.valid();
    record("condition", cond_name(c), !hit);
    if (hit) {
      auto in = open_in(dir.file("vocab.tsv"));
      st.vocab = read_vocabulary(in);
      auto din = open_in(dir.file("stats.tsv"));
      st.lemma_fallbacks = read_diagnostics(din)["lemma_fallbacks"];
      return;
    }
    dir.begin();
    st.stream = apply_condition(corpus(), kAllConditions[c]);
    st.vocab = build_vocab(*st.stream, cfg_.min_count);
    st.lemma_fallbacks = static_cast<long long>(st.stream->lemma_fallbacks);
    {
      auto out = open_out(dir.file("stream.txt"));
      write_token_stream(*st.stream, out);
      auto vout = open_out(dir.file("vocab.tsv"));
      write_vocabulary(*st.vocab, vout);
      auto sout = open_out(dir.file("stats.tsv"));
      write_diagnostics({{"lemma_fallbacks", st.lemma_fallbacks}}, sout);
    }
    dir.commit({"stream.txt", "vocab.tsv", "stats.tsv"});
    st.condition_ran = true;
  }

  SgnsConfig sgns_config(std::size_t c) const {
    SgnsConfig s = cfg_.sgns;
    s.seed = run_seed(cfg_.seed, in_.code, "sgns", cond_name(c));
    if (cfg_.deterministic) s.workers = 1;
    return s;
  }

  void embed_stage(std::size_t c) {
    auto& st = cond_[c];
    const SgnsConfig s = sgns_config(c);
    Sha256 h;
    h.field("embed").field(st.condition_key);
    write_config_fields(h, s);
    st.embed_key = h.hex();
    StageDir dir(root_ / "embed" / cond_name(c), "embed", st.embed_key);
    const bool hit = !st.condition_ran && dir.valid();
    record("embed", cond_name(c), !hit);
    if (hit) {
      st.table = load_vectors(dir.file("vectors.txt"));
      return;
    }
    dir.begin();
    if (!st.stream) {
      auto in = open_in(root_ / "condition" / cond_name(c) / "stream.txt");
      st.stream = read_token_stream(in);
    }
    st.table = train_sgns(*st.stream, *st.vocab, s);
    st.stream.reset();
    save_vectors(*st.table, dir.file("vectors.txt"));
    dir.commit({"vectors.txt"});
    st.embed_ran = true;
  }

  std::string lexicon_key_;
  bool lexicon_ran_ = false;
  std::optional<LanguageLexicon> lexicon_;

  void classify_stage(std::size_t c) {
    auto& st = cond_[c];
    Sha256 h;
    h.field("classify").field(st.embed_key).field(lexicon_key_);
    write_config_fields(h, cfg_.classifier);
    h.field(std::to_string(cfg_.seed));
    st.classify_key = h.hex();
    StageDir dir(root_ / "classify" / cond_name(c), "classify", st.classify_key);
    const bool hit = !st.embed_ran && !lexicon_ran_ && dir.valid();
    record("classify", cond_name(c), !hit);
    st.run.condition = kAllConditions[c];
    if (hit) {
      auto in = open_in(dir.file("accuracy.tsv"));
      st.run.accuracy = read_accuracy(in);
      return;
    }
    dir.begin();
    const auto outcome = run_classifier_experiment(*st.table, *lexicon_, cfg_.classifier,
                                                   run_seed(cfg_.seed, in_.code, "classifier", cond_name(c)));
    st.run.accuracy = outcome.splits;
    {
      auto out = open_out(dir.file("accuracy.tsv"));
      write_accuracy(outcome.splits, out);
      auto log = open_out(dir.file("sweep_log.tsv"));
      write_sweep_log(outcome.sweep.log, log);
    }
    dir.commit({"accuracy.tsv", "sweep_log.tsv"});
    st.classify_ran = true;
  }

  void densify_stage(std::size_t c) {
    auto& st = cond_[c];
    Sha256 h;
    h.field("densify").field(st.embed_key).field(lexicon_key_);
    write_config_fields(h, cfg_.densifier);
    st.densify_key = h.hex();
    StageDir dir(root_ / "densify" / cond_name(c), "densify", st.densify_key);
    const bool hit = !st.embed_ran && !lexicon_ran_ && dir.valid();
    record("densify", cond_name(c), !hit);
    if (hit) {
      auto in = open_in(dir.file("correlation.tsv"));
      st.run.correlation = read_correlation(in);
      auto sin = open_in(dir.file("scores.tsv"));
      st.run.scores = read_scores(sin);
      return;
    }
    dir.begin();
    const auto outcome = run_densifier_experiment(*st.table, *lexicon_, cfg_.densifier,
                                                  run_seed(cfg_.seed, in_.code, "densifier", cond_name(c)));
    st.run.correlation = outcome.splits;
    st.run.scores = outcome.scores;
    {
      auto out = open_out(dir.file("correlation.tsv"));
      write_correlation(outcome.splits, out);
      auto sout = open_out(dir.file("scores.tsv"));
      write_scores(outcome.scores, sout);
      auto tout = open_out(dir.file("transform.txt"));
      save_transform(outcome.first_transform, {st.table->dim(), cfg_.densifier.config.iterations, 0}, tout);
    }
    dir.commit({"correlation.tsv", "scores.tsv", "transform.txt"});
    st.densify_ran = true;
  }

  const ExperimentConfig& cfg_;
  const LanguageInputs& in_;
  std::vector<StageRecord>& records_;
  std::mutex& records_mutex_;
  fs::path root_;
  mutable std::mutex mutex_;
  std::mutex corpus_mutex_;
  std::optional<TaggedCorpus> corpus_;
  std::string corpus_hash_, concepts_hash_;
  std::array<ConditionState, kConditions> cond_{};
  std::optional<ExperimentReport> report_;
  std::string failed_stage_, error_;
  int exit_code_ = 0;
};

void LanguageJob::lexicon_stage() {
  guarded("lexicon", [&] {
    Sha256 h;
    h.field("lexicon").field(corpus_hash_).field(concepts_hash_).field(in_.code);
    for (const auto& st : cond_) h.field(st.condition_key);
    h.field(std::to_string(cfg_.lexicon.min_occurrences)).field(std::to_string(cfg_.lexicon.n_splits));
    const std::uint64_t split_seed = run_seed(cfg_.seed, in_.code, "splits");
    h.field(std::to_string(split_seed));
    lexicon_key_ = h.hex();
    StageDir dir(root_ / "lexicon", "lexicon", lexicon_key_);
    const bool upstream_ran = std::any_of(cond_.begin(), cond_.end(), [](const auto& s) { return s.condition_ran; });
    const bool hit = !upstream_ran && dir.valid();
    record("lexicon", "", !hit);
    if (hit) {
      LanguageLexicon lex;
      auto tin = open_in(dir.file("train.tsv"));
      lex.train = read_gender_lexicon(tin);
      auto ein = open_in(dir.file("eval.tsv"));
      lex.eval = read_labeled(ein);
      auto sin = open_in(dir.file("splits.tsv"));
      lex.splits = read_splits(sin);
      auto din = open_in(dir.file("diagnostics.tsv"));
      lex.diagnostics = read_diagnostics(din);
      lexicon_ = std::move(lex);
      return;
    }
    dir.begin();
    std::ifstream concepts_in(in_.concepts);
    if (!concepts_in) throw DataError("cannot read " + in_.concepts.string());
    const auto concepts = load_concepts(concepts_in);
    std::vector<const Vocabulary*> vocabs;
    for (const auto& st : cond_) vocabs.push_back(&*st.vocab);
    lexicon_ = prepare_lexicon(corpus(), concepts, vocabs, cfg_.lexicon, split_seed);
    {
      auto tout = open_out(dir.file("train.tsv"));
      write_gender_lexicon(lexicon_->train, tout);
      auto eout = open_out(dir.file("eval.tsv"));
      write_labeled(lexicon_->eval, eout);
      auto sout = open_out(dir.file("splits.tsv"));
      write_splits(lexicon_->splits, sout);
      auto dout = open_out(dir.file("diagnostics.tsv"));
      write_diagnostics(lexicon_->diagnostics, dout);
    }
    dir.commit({"train.tsv", "eval.tsv", "splits.tsv", "diagnostics.tsv"});
    lexicon_ran_ = true;
  });
}

void LanguageJob::report_stage() {
  guarded("report", [&] {
    Sha256 h;
    h.field("report").field(lexicon_key_);
    for (const auto& st : cond_) h.field(st.classify_key).field(st.densify_key);
    h.field(std::to_string(cfg_.top_k));
    StageDir dir(root_ / "report", "report", h.hex());
    const bool upstream_ran =
        lexicon_ran_ || std::any_of(cond_.begin(), cond_.end(), [](const auto& s) { return s.classify_ran || s.densify_ran; });
    const bool hit = !upstream_ran && dir.valid();
    record("report", "", !hit);
    if (hit) {
      auto in = open_in(dir.file("report.json"));
      report_ = report_from_json(nlohmann::json::parse(in));
      return;
    }
    dir.begin();
    std::map<std::string, long long> diagnostics = lexicon_->diagnostics;
    std::vector<ConditionRun> runs;
    for (std::size_t c = 0; c < kConditions; ++c) {
      diagnostics["lemma_fallbacks_" + cond_name(c)] = cond_[c].lemma_fallbacks;
      diagnostics["vocab_" + cond_name(c)] = static_cast<long long>(cond_[c].vocab->size());
      runs.push_back(cond_[c].run);
    }
    report_ = assemble_report(in_.code, runs, cfg_.top_k, diagnostics);
    for (auto [name, fmt] : {std::pair{"report.json", ReportFormat::json}, std::pair{"report.tsv", ReportFormat::tsv},
                             std::pair{"report.txt", ReportFormat::table}}) {
      auto out = open_out(dir.file(name));
      out << render_report(*report_, fmt);
    }
    dir.commit({"report.json", "report.tsv", "report.txt"});
  });
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config) {
  config.validate();
  PipelineResult result;
  std::mutex records_mutex;
  std::vector<std::unique_ptr<LanguageJob>> jobs;
  for (const auto& l : config.languages) {
    jobs.push_back(std::make_unique<LanguageJob>(config, l, result.stages, records_mutex));
  }
  const std::size_t n_lang = jobs.size();
  parallel_for(n_lang, config.jobs, [&](std::size_t i) { jobs[i]->guarded("condition", [&] { jobs[i]->prepare(); }); });
  parallel_for(n_lang * kConditions, config.jobs,
               [&](std::size_t i) { jobs[i / kConditions]->condition_and_embed(i % kConditions); });
  parallel_for(n_lang, config.jobs, [&](std::size_t i) {
    jobs[i]->lexicon_stage();
    jobs[i]->release_corpus();
  });
  parallel_for(n_lang * kConditions, config.jobs,
               [&](std::size_t i) { jobs[i / kConditions]->classify_and_densify(i % kConditions); });
  parallel_for(n_lang, config.jobs, [&](std::size_t i) { jobs[i]->report_stage(); });
  for (const auto& j : jobs) result.languages.push_back(j->result());
  // Worker scheduling must not leak into the record order.
  std::stable_sort(result.stages.begin(), result.stages.end(), [](const StageRecord& a, const StageRecord& b) {
    return std::tie(a.language, a.stage, a.condition) < std::tie(b.language, b.stage, b.condition);
  });
  return result;
}

}  // namespace genprobe
