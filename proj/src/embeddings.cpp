#include "genprobe/embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "genprobe/error.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

void SgnsConfig::validate() const {
  if (dim < 1) throw ConfigError("sgns: dim must be >= 1");
  if (window < 1) throw ConfigError("sgns: window must be >= 1");
  if (negatives < 1) throw ConfigError("sgns: negatives must be >= 1");
  if (epochs < 1) throw ConfigError("sgns: epochs must be >= 1");
  if (!(initial_step > 0)) throw ConfigError("sgns: initial_step must be positive");
  if (!(subsample_threshold >= 0)) throw ConfigError("sgns: subsample_threshold must be non-negative");
  if (workers < 1) throw ConfigError("sgns: workers must be >= 1");
  if (negative_table_size < 1) throw ConfigError("sgns: negative table must be non-empty");
}

EmbeddingTable::EmbeddingTable(Vocabulary vocab, int dim)
    : vocab_(std::move(vocab)),
      dim_(dim),
      input_(vocab_.size() * static_cast<std::size_t>(dim), 0.0f),
      output_(vocab_.size() * static_cast<std::size_t>(dim), 0.0f) {}

std::span<const float> EmbeddingTable::find(std::string_view word) const {
  auto id = vocab_.find(word);
  if (!id) return {};
  return input(static_cast<std::size_t>(*id));
}

bool EmbeddingTable::all_finite() const {
  auto finite = [](float v) { return std::isfinite(v); };
  return std::all_of(input_.begin(), input_.end(), finite) && std::all_of(output_.begin(), output_.end(), finite);
}

NegativeSampler::NegativeSampler(const Vocabulary& vocab, std::size_t table_size) {
  if (vocab.empty()) throw ConfigError("negative sampler needs a non-empty vocabulary");
  if (table_size == 0) throw ConfigError("negative table must be non-empty");
  std::vector<double> cumulative(vocab.size());
  double total = 0.0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    total += std::pow(static_cast<double>(vocab[i].count), 0.75);
    cumulative[i] = total;
  }
  table_.resize(table_size);
  std::size_t id = 0;
  for (std::size_t a = 0; a < table_size; ++a) {
    const double position = (static_cast<double>(a) + 0.5) / static_cast<double>(table_size) * total;
    while (id + 1 < vocab.size() && cumulative[id] <= position) ++id;
    table_[a] = static_cast<std::int32_t>(id);
  }
}

std::vector<double> NegativeSampler::table_probabilities(std::size_t vocab_size) const {
  std::vector<double> p(vocab_size, 0.0);
  for (auto id : table_) p[static_cast<std::size_t>(id)] += 1.0;
  for (auto& v : p) v /= static_cast<double>(table_.size());
  return p;
}

namespace {

template <bool Concurrent>
inline float load(const float* p) {
  if constexpr (Concurrent) {
    return std::atomic_ref<const float>(*p).load(std::memory_order_relaxed);
  } else {
    return *p;
  }
}

template <bool Concurrent>
inline void store(float* p, float v) {
  if constexpr (Concurrent) {
    std::atomic_ref<float>(*p).store(v, std::memory_order_relaxed);
  } else {
    *p = v;
  }
}

struct WorkerLoss {
  std::vector<double> loss;
  std::vector<std::uint64_t> pairs;
};

struct TrainContext {
  const std::vector<std::vector<std::int32_t>>* sentences;
  const std::vector<float>* keep_prob;
  const NegativeSampler* sampler;
  const SgnsConfig* config;
  float* input;
  float* output;
  std::uint64_t total_tokens;
  std::atomic<std::uint64_t>* processed;
};

template <bool Concurrent>
void train_worker(const TrainContext& ctx, std::size_t begin, std::size_t end, std::uint64_t seed, WorkerLoss& out) {
  const SgnsConfig& cfg = *ctx.config;
  const int d = cfg.dim;
  Rng rng(seed);
  std::vector<float> neu1e(static_cast<std::size_t>(d));
  std::vector<float> center_copy(static_cast<std::size_t>(d));
  std::vector<std::int32_t> kept;
  const double decay_horizon = static_cast<double>(cfg.epochs) * static_cast<double>(ctx.total_tokens) + 1.0;
  out.loss.assign(static_cast<std::size_t>(cfg.epochs), 0.0);
  out.pairs.assign(static_cast<std::size_t>(cfg.epochs), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::uint64_t epoch_pairs = 0;
    for (std::size_t s = begin; s < end; ++s) {
      const auto& sentence = (*ctx.sentences)[s];
      const std::uint64_t done = ctx.processed->fetch_add(sentence.size(), std::memory_order_relaxed);
      const float lr = static_cast<float>(
          cfg.initial_step * std::max(1e-4, 1.0 - static_cast<double>(done) / decay_horizon));
      kept.clear();
      for (auto id : sentence) {
        const float keep = (*ctx.keep_prob)[static_cast<std::size_t>(id)];
        if (keep >= 1.0f || rng.uniform() < keep) kept.push_back(id);
      }
      const int n = static_cast<int>(kept.size());
      for (int pos = 0; pos < n; ++pos) {
        const int w = cfg.window - static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.window)));
        float* center = ctx.input + static_cast<std::size_t>(kept[pos]) * d;
        for (int off = -w; off <= w; ++off) {
          const int cpos = pos + off;
          if (off == 0 || cpos < 0 || cpos >= n) continue;
          const std::int32_t context = kept[cpos];
          for (int i = 0; i < d; ++i) {
            neu1e[i] = 0.0f;
            center_copy[i] = load<Concurrent>(center + i);
          }
          for (int k = 0; k <= cfg.negatives; ++k) {
            std::int32_t target;
            float label;
            if (k == 0) {
              target = context;
              label = 1.0f;
            } else {
              target = ctx.sampler->draw(rng);
              if (target == context) continue;
              label = 0.0f;
            }
            float* out_vec = ctx.output + static_cast<std::size_t>(target) * d;
            float dot = 0.0f;
            for (int i = 0; i < d; ++i) dot += center_copy[i] * load<Concurrent>(out_vec + i);
            const float sig = 1.0f / (1.0f + std::exp(-dot));
            // -log sigma(dot) for positives, -log sigma(-dot) for negatives
            const double p = label > 0 ? sig : 1.0f - sig;
            epoch_loss -= std::log(std::max(p, 1e-30));
            ++epoch_pairs;
            const float g = (label - sig) * lr;
            for (int i = 0; i < d; ++i) {
              const float o = load<Concurrent>(out_vec + i);
              neu1e[i] += g * o;
              store<Concurrent>(out_vec + i, o + g * center_copy[i]);
            }
          }
          for (int i = 0; i < d; ++i) store<Concurrent>(center + i, load<Concurrent>(center + i) + neu1e[i]);
        }
      }
    }
    out.loss[static_cast<std::size_t>(epoch)] = epoch_loss;
    out.pairs[static_cast<std::size_t>(epoch)] = epoch_pairs;
  }
}

}  // namespace

EmbeddingTable train_sgns(const TokenStream& stream, const Vocabulary& vocab, const SgnsConfig& config,
                          TrainingLog* log) {
  config.validate();
  if (vocab.empty()) throw ConfigError("sgns: empty vocabulary");

  std::vector<std::vector<std::int32_t>> sentences;
  sentences.reserve(stream.sentences.size());
  std::uint64_t total_tokens = 0;
  for (const auto& sentence : stream.sentences) {
    std::vector<std::int32_t> ids;
    ids.reserve(sentence.size());
    for (const auto& tok : sentence) {
      if (auto id = vocab.find(tok)) ids.push_back(*id);
    }
    total_tokens += ids.size();
    if (!ids.empty()) sentences.push_back(std::move(ids));
  }

  EmbeddingTable table(vocab, config.dim);
  {
    Rng init(derive_seed(config.seed, "sgns-init"));
    for (auto& v : table.input_data()) v = static_cast<float>((init.uniform() - 0.5) / config.dim);
  }

  std::vector<float> keep_prob(vocab.size(), 1.0f);
  if (config.subsample_threshold > 0) {
    const double t = config.subsample_threshold * static_cast<double>(vocab.total_count());
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      const double c = static_cast<double>(vocab[i].count);
      keep_prob[i] = static_cast<float>(std::min(1.0, (std::sqrt(c / t) + 1.0) * t / c));
    }
  }

  const NegativeSampler sampler(vocab, config.negative_table_size);
  std::atomic<std::uint64_t> processed{0};
  TrainContext ctx{&sentences,         &keep_prob,   &sampler,     &config,
                   table.input_data().data(), table.output_data().data(), total_tokens, &processed};

  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(sentences.size())));
  std::vector<WorkerLoss> losses(static_cast<std::size_t>(workers));
  if (workers == 1) {
    train_worker<false>(ctx, 0, sentences.size(), derive_seed(config.seed, "sgns-worker-0"), losses[0]);
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (sentences.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t b = std::min(sentences.size(), chunk * w);
      const std::size_t e = std::min(sentences.size(), b + chunk);
      threads.emplace_back([&, w, b, e] {
        train_worker<true>(ctx, b, e, derive_seed(config.seed, "sgns-worker-" + std::to_string(w)),
                           losses[static_cast<std::size_t>(w)]);
      });
    }
    for (auto& t : threads) t.join();
  }

  TrainingLog local;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::uint64_t pairs = 0;
    for (const auto& wl : losses) {
      loss += wl.loss[static_cast<std::size_t>(epoch)];
      pairs += wl.pairs[static_cast<std::size_t>(epoch)];
    }
    const double mean_loss = pairs ? loss / static_cast<double>(pairs) : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw NumericalError("sgns: non-finite loss in epoch " + std::to_string(epoch + 1));
    }
    local.epochs.push_back({epoch + 1, mean_loss, pairs});
  }
  local.tokens_seen = processed.load();
  if (!table.all_finite()) throw NumericalError("sgns: non-finite vector after training");
  if (log) *log = std::move(local);
  return table;
}

namespace {

void write_rows(const EmbeddingTable& table, const std::vector<float>& data, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[32];
  const auto d = static_cast<std::size_t>(table.dim());
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.vocab()[i].type;
    for (std::size_t j = 0; j < d; ++j) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data[i * d + j]);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
}

struct ParsedRows {
  std::vector<std::string> types;
  std::vector<float> data;
  int dim = 0;
};

ParsedRows read_rows(std::istream& in) {
  ParsedRows rows;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("vector file: missing header");
  const auto header = split_whitespace(line);
  if (header.size() != 2) throw FormatError("vector file: header must be '<rows> <dim>'");
  std::size_t n = 0;
  int d = 0;
  auto r1 = std::from_chars(header[0].data(), header[0].data() + header[0].size(), n);
  auto r2 = std::from_chars(header[1].data(), header[1].data() + header[1].size(), d);
  if (r1.ec != std::errc{} || r2.ec != std::errc{} || d < 1) throw FormatError("vector file: bad header");
  rows.dim = d;
  rows.types.reserve(n);
  rows.data.reserve(n * static_cast<std::size_t>(d));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (rows.types.size() == n) throw FormatError("vector file: more rows than the header declares");
    const auto parts = split_whitespace(line);
    if (parts.size() != static_cast<std::size_t>(d) + 1) {
      throw FormatError("vector file line " + std::to_string(line_no) + ": expected " + std::to_string(d) +
                        " components");
    }
    rows.types.emplace_back(parts[0]);
    for (std::size_t j = 1; j < parts.size(); ++j) {
      float v = 0;
      auto r = std::from_chars(parts[j].data(), parts[j].data() + parts[j].size(), v);
      if (r.ec != std::errc{} || r.ptr != parts[j].data() + parts[j].size()) {
        throw FormatError("vector file line " + std::to_string(line_no) + ": bad number");
      }
      rows.data.push_back(v);
    }
  }
  if (rows.types.size() != n) {
    throw FormatError("vector file: header declares " + std::to_string(n) + " rows, found " +
                      std::to_string(rows.types.size()));
  }
  return rows;
}

}  // namespace

void save_vectors(const EmbeddingTable& table, std::ostream& out) { write_rows(table, table.input_data(), out); }

void save_context_vectors(const EmbeddingTable& table, std::ostream& out) {
  write_rows(table, table.output_data(), out);
}

EmbeddingTable load_vectors(std::istream& in) {
  ParsedRows rows = read_rows(in);
  std::vector<Vocabulary::Entry> entries;
  entries.reserve(rows.types.size());
  for (auto& t : rows.types) entries.push_back({std::move(t), 0});
  EmbeddingTable table(Vocabulary(std::move(entries)), rows.dim);
  table.input_data() = std::move(rows.data);
  return table;
}

void load_context_vectors(EmbeddingTable& table, std::istream& in) {
  ParsedRows rows = read_rows(in);
  if (rows.dim != table.dim() || rows.types.size() != table.size()) {
    throw FormatError("context vectors do not match the input vectors' shape");
  }
  for (std::size_t i = 0; i < rows.types.size(); ++i) {
    if (rows.types[i] != table.vocab()[i].type) throw FormatError("context vectors list types in a different order");
  }
  table.output_data() = std::move(rows.data);
}

void save_vectors(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  save_vectors(table, out);
}

EmbeddingTable load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_vectors(in);
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace genprobe
