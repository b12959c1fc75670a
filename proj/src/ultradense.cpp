#include "genprobe/ultradense.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "genprobe/adam.hpp"
#include "genprobe/error.hpp"
#include "genprobe/rng.hpp"
#include "genprobe/text.hpp"

namespace genprobe {

OrthogonalTransform OrthogonalTransform::identity(int d) {
  if (d < 1) throw ConfigError("transform dimension must be positive");
  return {Eigen::MatrixXd::Identity(d, d), 0};
}

double orthogonality_error(const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd g = q.transpose() * q - Eigen::MatrixXd::Identity(q.cols(), q.cols());
  return g.cwiseAbs().maxCoeff();
}

namespace {

// Reservoir of `capacity` pairs from a stream of unknown length.
class PairReservoir {
 public:
  PairReservoir(std::size_t capacity, Rng& rng) : capacity_(capacity), rng_(rng) {}

  void offer(LemmaPair p) {
    ++seen_;
    if (pairs_.size() < capacity_) {
      pairs_.push_back(p);
      return;
    }
    const std::uint64_t j = rng_.below(seen_);
    if (j < capacity_) pairs_[static_cast<std::size_t>(j)] = p;
  }

  std::vector<LemmaPair> take() { return std::move(pairs_); }

 private:
  std::size_t capacity_;
  Rng& rng_;
  std::uint64_t seen_ = 0;
  std::vector<LemmaPair> pairs_;
};

}  // namespace

PairSets build_pair_sets(const std::vector<LabeledLemma>& lemmas, const PairSetOptions& options) {
  if (lemmas.size() < 2) throw ConfigError("pair sets need at least 2 lemmas");
  std::set<std::string_view> seen;
  std::set<Gender> genders;
  for (const auto& l : lemmas) {
    if (!seen.insert(l.lemma).second) throw ConfigError("pair sets: duplicate lemma '" + l.lemma + "'");
    genders.insert(l.gender);
  }
  if (genders.size() < 2) throw ConfigError("pair sets: only one gender present, no different-gender pairs");

  PairSets out;
  out.lemmas = lemmas;
  const auto n = static_cast<std::int32_t>(lemmas.size());
  if (lemmas.size() <= options.enumerate_limit) {
    for (std::int32_t i = 0; i < n; ++i)
      for (std::int32_t j = i + 1; j < n; ++j)
        (lemmas[i].gender == lemmas[j].gender ? out.same : out.diff).push_back({i, j});
    return out;
  }
  out.sampled = true;
  Rng rng(derive_seed(options.seed, "pair-reservoir"));
  PairReservoir same(options.sample_size, rng), diff(options.sample_size, rng);
  for (std::int32_t i = 0; i < n; ++i)
    for (std::int32_t j = i + 1; j < n; ++j)
      (lemmas[i].gender == lemmas[j].gender ? same : diff).offer({i, j});
  out.same = same.take();
  out.diff = diff.take();
  return out;
}

Eigen::MatrixXd embedding_matrix(const std::vector<LabeledLemma>& lemmas, const EmbeddingTable& table) {
  Eigen::MatrixXd m(table.dim(), static_cast<Eigen::Index>(lemmas.size()));
  for (std::size_t i = 0; i < lemmas.size(); ++i) {
    auto v = table.find(lemmas[i].lemma);
    if (v.empty()) throw DataError("no vector for lemma '" + lemmas[i].lemma + "'");
    for (int j = 0; j < table.dim(); ++j) m(j, static_cast<Eigen::Index>(i)) = v[static_cast<std::size_t>(j)];
  }
  return m;
}

namespace {

void check_pairs(const Eigen::MatrixXd& vectors, std::span<const LemmaPair> pairs) {
  for (const auto& p : pairs) {
    if (p.first < 0 || p.second < 0 || p.first >= vectors.cols() || p.second >= vectors.cols()) {
      throw DimensionError("pair index outside the embedding matrix");
    }
  }
}

void check_transform(const OrthogonalTransform& t, const Eigen::MatrixXd& vectors) {
  if (t.q.rows() != t.q.cols() || t.q.rows() != vectors.rows()) {
    throw DimensionError("transform is " + std::to_string(t.q.rows()) + "x" + std::to_string(t.q.cols()) +
                         " but vectors have dimension " + std::to_string(vectors.rows()));
  }
  if (t.gender_axis < 0 || t.gender_axis >= t.q.rows()) throw DimensionError("gender axis out of range");
}

}  // namespace

double objective_value(const OrthogonalTransform& transform, const Eigen::MatrixXd& vectors,
                       std::span<const LemmaPair> same, std::span<const LemmaPair> diff) {
  check_transform(transform, vectors);
  check_pairs(vectors, same);
  check_pairs(vectors, diff);
  const Eigen::RowVectorXd projected = transform.q.row(transform.gender_axis) * vectors;
  double value = 0.0;
  for (const auto& p : same) {
    const double u = projected(p.first) - projected(p.second);
    value += u * u;
  }
  for (const auto& p : diff) {
    const double u = projected(p.first) - projected(p.second);
    value -= u * u;
  }
  return value;
}

Eigen::MatrixXd objective_gradient(const OrthogonalTransform& transform, const Eigen::MatrixXd& vectors,
                                   std::span<const LemmaPair> same, std::span<const LemmaPair> diff) {
  check_transform(transform, vectors);
  check_pairs(vectors, same);
  check_pairs(vectors, diff);
  const auto d = transform.q.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(d, d);
  const auto q = transform.q.row(transform.gender_axis);
  auto accumulate = [&](const LemmaPair& p, double sign) {
    const Eigen::VectorXd u = vectors.col(p.first) - vectors.col(p.second);
    grad.row(transform.gender_axis) += (sign * 2.0 * q.dot(u)) * u.transpose();
  };
  for (const auto& p : same) accumulate(p, 1.0);
  for (const auto& p : diff) accumulate(p, -1.0);
  return grad;
}

Eigen::MatrixXd svd_orthogonalize(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionError("svd_orthogonalize needs a non-empty square matrix");
  if (!m.allFinite()) throw NumericalError("svd_orthogonalize: matrix has non-finite entries");
  const auto n = m.cols();
  // One-sided Jacobi: rotate column pairs of A = M V until they are
  // mutually orthogonal, so that A = U S.
  Eigen::MatrixXd a = m;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd norm2(n);
  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 60;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) norm2(i) = a.col(i).squaredNorm();
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double alpha = norm2(i);
        const double beta = norm2(j);
        const double gamma = a.col(i).dot(a.col(j));
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < n; ++r) {
          const double ai = a(r, i), aj = a(r, j);
          a(r, i) = c * ai - s * aj;
          a(r, j) = s * ai + c * aj;
          const double vi = v(r, i), vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
        norm2(i) = alpha - t * gamma;
        norm2(j) = beta + t * gamma;
      }
    }
  }
  if (!converged) throw NumericalError("svd_orthogonalize: Jacobi sweeps did not converge");
  double smax = 0.0, smin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = a.col(i).norm();
    smax = std::max(smax, s);
    smin = std::min(smin, s);
  }
  if (!(smax > 0.0) || smin / smax <= 1e-12) {
    throw NumericalError("svd_orthogonalize: matrix is rank deficient (sigma_min/sigma_max = " +
                         std::to_string(smax > 0.0 ? smin / smax : 0.0) + ")");
  }
  for (Eigen::Index i = 0; i < n; ++i) a.col(i) /= a.col(i).norm();
  return a * v.transpose();
}

void DensifierConfig::validate() const {
  if (iterations < 0) throw ConfigError("densifier: iterations must be >= 0");
  if (!(step_size > 0)) throw ConfigError("densifier: step_size must be positive");
  if (gender_axis < 0) throw ConfigError("densifier: gender_axis must be >= 0");
}

OrthogonalTransform train_densifier(const Eigen::MatrixXd& vectors, const PairSets& pairs,
                                    const DensifierConfig& config, const DensifierObserver& observer) {
  config.validate();
  const int d = static_cast<int>(vectors.rows());
  if (config.gender_axis >= d) throw ConfigError("densifier: gender_axis exceeds the dimension");
  OrthogonalTransform t = OrthogonalTransform::identity(d);
  t.gender_axis = config.gender_axis;
  if (config.iterations == 0) return t;
  if (pairs.same.empty() || pairs.diff.empty()) throw ConfigError("densifier: both pair sets must be non-empty");
  if (vectors.cols() != static_cast<Eigen::Index>(pairs.lemmas.size())) {
    throw DimensionError("densifier: vector matrix does not match the pair lemmas");
  }
  Rng rng(derive_seed(config.seed, "densifier"));
  const AdamSettings adam{config.step_size, config.beta1, config.beta2, config.epsilon};
  AdamState<Eigen::MatrixXd> state(t.q);
  for (int it = 1; it <= config.iterations; ++it) {
    const LemmaPair s = pairs.same[static_cast<std::size_t>(rng.below(pairs.same.size()))];
    const LemmaPair dp = pairs.diff[static_cast<std::size_t>(rng.below(pairs.diff.size()))];
    const Eigen::MatrixXd grad = objective_gradient(t, vectors, std::span(&s, 1), std::span(&dp, 1));
    const Eigen::MatrixXd moved = t.q - state.step(grad, adam);
    t.q = svd_orthogonalize(moved);
    if (observer) observer(it, t.q);
  }
  return t;
}

OrthogonalTransform train_densifier(const EmbeddingTable& table, const PairSets& pairs,
                                    const DensifierConfig& config, const DensifierObserver& observer) {
  return train_densifier(embedding_matrix(pairs.lemmas, table), pairs, config, observer);
}

double gender_score(const OrthogonalTransform& transform, const Eigen::VectorXd& embedding) {
  if (embedding.size() != transform.q.cols()) throw DimensionError("gender_score: dimension mismatch");
  return transform.q.row(transform.gender_axis).dot(embedding);
}

double gender_score(const OrthogonalTransform& transform, std::span<const float> embedding) {
  if (static_cast<Eigen::Index>(embedding.size()) != transform.q.cols()) {
    throw DimensionError("gender_score: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < embedding.size(); ++j) {
    s += transform.q(transform.gender_axis, static_cast<Eigen::Index>(j)) * embedding[j];
  }
  return s;
}

namespace {

std::string number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_field(std::string_view s, std::string_view what) {
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw FormatError("transform file: bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void save_transform(const OrthogonalTransform& transform, const TransformHeader& header, std::ostream& out) {
  out << transform.dim() << ' ' << header.iterations << ' ' << header.seed << ' ' << transform.gender_axis << '\n';
  for (Eigen::Index r = 0; r < transform.q.rows(); ++r) {
    for (Eigen::Index c = 0; c < transform.q.cols(); ++c) {
      if (c) out << ' ';
      out << number(transform.q(r, c));
    }
    out << '\n';
  }
}

OrthogonalTransform load_transform(std::istream& in, TransformHeader* header) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("transform file: empty");
  auto head = split_whitespace(line);
  if (head.size() != 4) throw FormatError("transform file: header must be 'dim iterations seed axis'");
  TransformHeader h;
  h.dim = parse_field<int>(head[0], "dimension");
  h.iterations = parse_field<int>(head[1], "iteration count");
  h.seed = parse_field<std::uint64_t>(head[2], "seed");
  const int axis = parse_field<int>(head[3], "gender axis");
  if (h.dim < 1 || axis < 0 || axis >= h.dim) throw FormatError("transform file: bad header values");
  OrthogonalTransform t{Eigen::MatrixXd(h.dim, h.dim), axis};
  for (int r = 0; r < h.dim; ++r) {
    if (!std::getline(in, line)) throw FormatError("transform file: truncated at row " + std::to_string(r));
    auto cells = split_whitespace(line);
    if (static_cast<int>(cells.size()) != h.dim) {
      throw FormatError("transform file: row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                        " values, expected " + std::to_string(h.dim));
    }
    for (int c = 0; c < h.dim; ++c) t.q(r, c) = parse_field<double>(cells[static_cast<std::size_t>(c)], "entry");
  }
  if (header) *header = h;
  return t;
}

std::vector<ScoredLemma> score_lemmas(const OrthogonalTransform& transform, const EmbeddingTable& table,
                                      const std::vector<LabeledLemma>& lemmas) {
  std::vector<ScoredLemma> out;
  out.reserve(lemmas.size());
  for (const auto& l : lemmas) {
    auto v = table.find(l.lemma);
    if (v.empty()) throw DataError("no vector for lemma '" + l.lemma + "'");
    out.push_back({l.lemma, gender_score(transform, v), l.gender});
  }
  return out;
}

void write_scores(const std::vector<ScoredLemma>& scores, std::ostream& out) {
  for (const auto& s : scores) out << s.lemma << '\t' << number(s.score) << '\t' << to_string(s.gold) << '\n';
}

}  // namespace genprobe
