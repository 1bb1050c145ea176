#include "eigenscope/refine.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "eigenscope/parallel.hpp"

namespace eigenscope {

namespace {

constexpr double kMassFloor = 1e-300;
constexpr double kReportFloor = 1e-12;
constexpr std::uint64_t kMaxCylinderWords = 10'000'000ULL;

std::int64_t mod(std::int64_t x, std::int64_t m) {
  const std::int64_t r = x % m;
  return r < 0 ? r + m : r;
}

void check_alphabet(int K) {
  if (K < 1) throw Error(ErrorKind::InvalidArgument, "alphabet size must be positive", K);
}

double xlogx_sum(const std::vector<double>& m) {
  double h = 0.0;
  for (double x : m)
    if (x >= kMassFloor) h -= x * std::log(x);
  return h;
}

// Supports and profile values of a real diagonal partition.
struct DiagonalPieces {
  int K = 0;
  Index N = 0;
  std::vector<std::vector<Index>> support;
  std::vector<RealVector> values;  // p_k restricted to its support

  explicit DiagonalPieces(const QuantumPartition& pi) {
    if (!pi.all_diagonal()) {
      throw Error(ErrorKind::InvalidArgument, "refined tables need a diagonal partition");
    }
    const RealMatrix prof = pi.diagonal_profiles();
    K = static_cast<int>(pi.size());
    N = pi.dim();
    support.resize(K);
    values.resize(K);
    for (int k = 0; k < K; ++k) {
      for (Index j = 0; j < N; ++j)
        if (prof(j, k) != 0.0) support[k].push_back(j);
      values[k].resize(static_cast<Index>(support[k].size()));
      for (std::size_t i = 0; i < support[k].size(); ++i) values[k](Index(i)) = prof(support[k][i], k);
    }
  }

  Index size(int k) const { return static_cast<Index>(support[k].size()); }

  // m(rows in supp b, cols in supp a)
  Matrix block(const Matrix& m, int b, int a) const {
    Matrix out(size(b), size(a));
    for (Index c = 0; c < size(a); ++c)
      for (Index r = 0; r < size(b); ++r) out(r, c) = m(support[b][r], support[a][c]);
    return out;
  }

  Matrix rows(const Matrix& m, int b) const {
    Matrix out(size(b), m.cols());
    for (Index r = 0; r < size(b); ++r) out.row(r) = m.row(support[b][r]);
    return out;
  }

  Matrix cols(const Matrix& m, int a) const {
    Matrix out(m.rows(), size(a));
    for (Index c = 0; c < size(a); ++c) out.col(c) = m.col(support[a][c]);
    return out;
  }
};

Matrix dense_of(const OperatorHandle& u) { return u.materialize(); }

Matrix matrix_power(const Matrix& u, int n) {
  Matrix p = Matrix::Identity(u.rows(), u.cols());
  for (int t = 0; t < n; ++t) p = u * p;
  return p;
}

// Path masses: node (a_0..a_d) holds P_{a_d} U* ⋯ U* P_{a_0} start.
std::vector<RealMatrix> tree_masses(const Matrix& start, int n, const Matrix& u,
                                    const QuantumPartition& pi, bool all_levels) {
  const DiagonalPieces pieces(pi);
  const int K = pieces.K;
  const Index M = start.cols();
  if (start.rows() != pieces.N || u.rows() != pieces.N) {
    throw Error(ErrorKind::DimensionMismatch, "state, propagator and partition dimensions differ");
  }
  const std::uint64_t words = word_count(K, n + 1);
  if (words > kMaxCylinderWords) {
    throw Error(ErrorKind::Budget,
                "cylinder table would hold " + std::to_string(words) + " words (limit 1e7)",
                double(words));
  }
  const Matrix ustar = u.adjoint();
  std::vector<std::vector<Matrix>> blocks(K, std::vector<Matrix>(K));
  for (int b = 0; b < K; ++b)
    for (int a = 0; a < K; ++a) {
      blocks[b][a] = pieces.block(ustar, b, a);
      blocks[b][a].array().colwise() *= pieces.values[b].cast<cplx>().array();
    }

  std::vector<RealMatrix> levels(static_cast<std::size_t>(n + 1));
  for (int d = 0; d <= n; ++d) {
    if (all_levels || d == n) levels[d] = RealMatrix::Zero(Index(word_count(K, d + 1)), M);
  }
  std::vector<std::uint64_t> stride(static_cast<std::size_t>(n + 2), 1);
  for (int d = 1; d <= n + 1; ++d) stride[d] = stride[d - 1] * std::uint64_t(K);

  std::function<void(int, std::uint64_t, int, const Matrix&)> descend =
      [&](int depth, std::uint64_t index, int letter, const Matrix& v) {
        if (all_levels || depth == n) levels[depth].row(Index(index)) = v.colwise().squaredNorm();
        if (depth == n) return;
        for (int b = 0; b < K; ++b) {
          if (pieces.size(b) == 0) continue;
          const Matrix child = blocks[b][letter] * v;
          descend(depth + 1, index + std::uint64_t(b) * stride[depth + 1], b, child);
        }
      };

  std::vector<Matrix> roots(K);
  for (int a = 0; a < K; ++a) {
    roots[a] = pieces.rows(start, a);
    roots[a].array().colwise() *= pieces.values[a].cast<cplx>().array();
  }
  if (n == 0) {
    for (int a = 0; a < K; ++a) descend(0, std::uint64_t(a), a, roots[a]);
    return levels;
  }
  // roots are written here; subtrees at depth 1 run as independent tasks
  for (int a = 0; a < K; ++a)
    if (all_levels) levels[0].row(a) = roots[a].colwise().squaredNorm();
  const std::size_t tasks = std::size_t(K) * std::size_t(K);
  parallel_for(tasks, [&](std::size_t t) {
    const int a = int(t % std::size_t(K));
    const int b = int(t / std::size_t(K));
    if (pieces.size(a) == 0 || pieces.size(b) == 0) return;
    const Matrix child = blocks[b][a] * roots[a];
    descend(1, std::uint64_t(a) + std::uint64_t(b) * stride[1], b, child);
  });
  return levels;
}

double residual_of_eigen(const OperatorHandle& u, const Vector& psi) {
  const Vector up = u.apply(psi);
  const cplx mu = psi.dot(up);
  return (up - mu * psi).norm();
}

// Weighted log Jacobian of the refined word read off a cylinder word.
double log_j_of_cylinder(const JacobianTable& jac, std::uint64_t index, int K, int length) {
  if (length <= 1) return 0.0;
  std::vector<int> c(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    c[i] = int(index % std::uint64_t(K));
    index /= std::uint64_t(K);
  }
  double s = 0.0;
  for (int i = 0; i + 1 < length; ++i) s += jac.log_j1(c[i + 1], c[i]);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- words

SymbolWord::SymbolWord(std::vector<int> l, int alphabet) : letters(std::move(l)), K(alphabet) {
  check_alphabet(K);
  if (letters.empty()) throw Error(ErrorKind::InvalidArgument, "word must have at least one letter");
  for (int x : letters)
    if (x < 0 || x >= K) throw Error(ErrorKind::InvalidArgument, "letter outside the alphabet", x);
}

SymbolWord SymbolWord::from_index(std::uint64_t index, int length, int alphabet) {
  std::vector<int> l(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    l[i] = int(index % std::uint64_t(alphabet));
    index /= std::uint64_t(alphabet);
  }
  return SymbolWord(std::move(l), alphabet);
}

std::uint64_t SymbolWord::index() const {
  std::uint64_t idx = 0;
  for (std::size_t i = letters.size(); i-- > 0;) idx = idx * std::uint64_t(K) + std::uint64_t(letters[i]);
  return idx;
}

SymbolWord SymbolWord::reversed() const {
  return SymbolWord(std::vector<int>(letters.rbegin(), letters.rend()), K);
}

std::string SymbolWord::str() const {
  std::string s;
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (K > 10 && i) s += '.';
    s += std::to_string(letters[i]);
  }
  return s;
}

std::uint64_t word_count(int K, int length) {
  std::uint64_t c = 1;
  for (int i = 0; i < length; ++i) {
    if (c > (std::uint64_t(1) << 62) / std::uint64_t(K)) return std::uint64_t(-1);
    c *= std::uint64_t(K);
  }
  return c;
}

std::uint64_t reverse_index(std::uint64_t index, int K, int length) {
  std::uint64_t out = 0;
  for (int i = 0; i < length; ++i) {
    out = out * std::uint64_t(K) + index % std::uint64_t(K);
    index /= std::uint64_t(K);
  }
  return out;
}

Vector refined_apply(const SymbolWord& word, const Vector& psi, const OperatorHandle& u,
                     const QuantumPartition& pi, bool adjoint, Schedule schedule) {
  if (psi.size() != pi.dim() || u.rows() != pi.dim() || u.cols() != pi.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "refined_apply: dimensions disagree");
  }
  if (word.K != static_cast<int>(pi.size())) {
    throw Error(ErrorKind::DimensionMismatch, "refined_apply: alphabet differs from partition size");
  }
  const int n = word.n();
  Vector v = psi;
  if (!adjoint) {
    v = pi[word.letters[0]].apply(v);
    for (int i = 1; i <= n; ++i) v = pi[word.letters[i]].apply(u.apply(v));
    if (schedule == Schedule::Interleaved)
      for (int i = 0; i < n; ++i) v = u.apply_adjoint(v);
  } else {
    if (schedule == Schedule::Interleaved)
      for (int i = 0; i < n; ++i) v = u.apply(v);
    v = pi[word.letters[n]].apply_adjoint(v);
    for (int i = n - 1; i >= 0; --i) v = pi[word.letters[i]].apply_adjoint(u.apply_adjoint(v));
  }
  return v;
}

// ---------------------------------------------------------------- measures

CylinderMeasure::CylinderMeasure(int K, int n, std::vector<std::uint64_t> words,
                                 std::vector<double> masses)
    : K_(K), n_(n), words_(std::move(words)), masses_(std::move(masses)) {
  check_alphabet(K);
  if (words_.size() != masses_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "cylinder measure: word and mass counts differ");
  }
  for (std::size_t i = 1; i < words_.size(); ++i) {
    if (words_[i] <= words_[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "cylinder measure words must be strictly increasing");
    }
  }
}

CylinderMeasure CylinderMeasure::from_dense(int K, int n, const std::vector<double>& masses) {
  if (masses.size() != word_count(K, n + 1)) {
    throw Error(ErrorKind::DimensionMismatch, "dense cylinder table has the wrong size");
  }
  std::vector<std::uint64_t> w(masses.size());
  std::iota(w.begin(), w.end(), std::uint64_t(0));
  return CylinderMeasure(K, n, std::move(w), masses);
}

double CylinderMeasure::mass(std::uint64_t index) const {
  const auto it = std::lower_bound(words_.begin(), words_.end(), index);
  if (it == words_.end() || *it != index) return 0.0;
  return masses_[std::size_t(it - words_.begin())];
}

double CylinderMeasure::total() const {
  double s = 0.0;
  for (double m : masses_) s += m;
  return s;
}

double CylinderMeasure::min_mass() const {
  return masses_.empty() ? 0.0 : *std::min_element(masses_.begin(), masses_.end());
}

namespace {
CylinderMeasure regroup(int K, int n, const std::vector<std::uint64_t>& keys,
                        const std::vector<double>& masses) {
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<std::uint64_t> w;
  std::vector<double> m;
  for (std::size_t i : order) {
    if (!w.empty() && w.back() == keys[i]) {
      m.back() += masses[i];
    } else {
      w.push_back(keys[i]);
      m.push_back(masses[i]);
    }
  }
  return CylinderMeasure(K, n, std::move(w), std::move(m));
}
}  // namespace

CylinderMeasure CylinderMeasure::marginalize_last() const {
  if (n_ == 0) throw Error(ErrorKind::InvalidArgument, "cannot marginalize a one-letter table");
  const std::uint64_t top = word_count(K_, n_);
  std::vector<std::uint64_t> keys(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) keys[i] = words_[i] % top;
  return regroup(K_, n_ - 1, keys, masses_);
}

CylinderMeasure CylinderMeasure::shift(int count) const {
  if (count < 0 || count > n_) throw Error(ErrorKind::InvalidArgument, "shift count out of range", count);
  const std::uint64_t div = word_count(K_, count);
  std::vector<std::uint64_t> keys(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) keys[i] = words_[i] / div;
  return regroup(K_, n_ - count, keys, masses_);
}

double CylinderMeasure::entropy() const { return xlogx_sum(masses_); }

CylinderMeasure cylinder_measure(const StateVector& psi, int n, const OperatorHandle& u,
                                 const QuantumPartition& pi) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "word length must be nonnegative", n);
  const int K = static_cast<int>(pi.size());
  const std::uint64_t words = word_count(K, n + 1);
  if (words > kMaxCylinderWords) {
    throw Error(ErrorKind::Budget,
                "cylinder table would hold " + std::to_string(words) + " words (limit 1e7)",
                double(words));
  }
  Vector start = psi.amps;
  for (int t = 0; t < n; ++t) start = u.apply(start);
  const auto levels = tree_masses(start, n, dense_of(u), pi, false);
  std::vector<double> m(levels[n].data(), levels[n].data() + levels[n].rows());
  auto out = CylinderMeasure::from_dense(K, n, m);
  out.eigen_residual = residual_of_eigen(u, psi.amps);
  out.eigenvector_warning = out.eigen_residual > 1e-8 || !psi.is_normalized(1e-10);
  return out;
}

std::vector<RealMatrix> cylinder_levels(const Matrix& eigvecs, int n, const OperatorHandle& u,
                                        const QuantumPartition& pi) {
  return tree_masses(eigvecs, n, dense_of(u), pi, true);
}

std::vector<double> refined_masses(const StateVector& psi, int n, const OperatorHandle& u,
                                   const QuantumPartition& pi) {
  const int K = static_cast<int>(pi.size());
  const auto levels = tree_masses(psi.amps, n, dense_of(u), pi, false);
  std::vector<double> out(std::size_t(levels[n].rows()));
  for (Index i = 0; i < levels[n].rows(); ++i)
    out[reverse_index(std::uint64_t(i), K, n + 1)] = levels[n](i, 0);
  return out;
}

// ---------------------------------------------------------------- pressures

std::vector<double> make_weights(const JacobianTable& jac, int n, WeightMode mode) {
  const int K = jac.K();
  const std::uint64_t count = word_count(K, n + 1);
  std::vector<double> w(count, 1.0);
  if (mode == WeightMode::None) return w;
  const double power = mode == WeightMode::Alpha ? -0.5 : -1.0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto word = SymbolWord::from_index(i, n + 1, K);
    w[i] = std::exp(power * jac.log_word(word.letters));
  }
  return w;
}

PressureReport entropy_pressure(const CylinderMeasure& measure, const JacobianTable& jac,
                                WeightMode mode) {
  if (measure.K() != jac.K()) {
    throw Error(ErrorKind::DimensionMismatch, "measure alphabet differs from Jacobian table");
  }
  const double total = measure.total();
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error(ErrorKind::Precondition, "cylinder measure does not total 1", total);
  }
  PressureReport r;
  r.n = measure.n();
  const int length = measure.n() + 1;
  double j_avg = 0.0;
  for (std::size_t i = 0; i < measure.size(); ++i) {
    const double m = measure.masses()[i];
    if (m >= kMassFloor) {
      r.h_n -= m * std::log(m);
      j_avg += m * log_j_of_cylinder(jac, measure.words()[i], measure.K(), length);
    }
    if (m >= kReportFloor) {
      r.words.push_back(measure.words()[i]);
      r.masses.push_back(m);
    }
  }
  // −2 Σ μ log α with log α = −½ log J, and with log β = −log J
  r.p_alpha = r.h_n + j_avg;
  r.p_beta = r.h_n + 2.0 * j_avg;
  r.pressure = mode == WeightMode::Alpha ? r.p_alpha : mode == WeightMode::Beta ? r.p_beta : r.h_n;
  return r;
}

int ehrenfest_time(Index n, double delta_prime, double lambda) {
  if (!(delta_prime >= 0.0 && delta_prime < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "delta' must lie in [0, 1)", delta_prime);
  }
  return static_cast<int>(std::floor((1.0 - delta_prime) * std::log(kTwoPi * double(n)) / lambda));
}

int egorov_time(Index n, double gamma, double lambda) {
  return static_cast<int>(std::floor((1.0 - gamma) * std::log(kTwoPi * double(n)) / (2.0 * lambda)));
}

EhrenfestConfig EhrenfestConfig::make(Index n, double delta_prime, double lambda) {
  EhrenfestConfig c;
  c.delta_prime = delta_prime;
  c.N = n;
  c.lambda = lambda;
  c.n_E = ehrenfest_time(n, delta_prime, lambda);
  return c;
}

TorusModel TorusModel::build(Index n, int K, double eta, double Lambda, const ClassicalCatMap& map,
                             int resolution) {
  TorusModel m;
  m.map = map;
  m.N = n;
  m.strips = {K, eta};
  m.Lambda = Lambda > 0.0 ? Lambda : 10.0 * map.lambda();
  m.U = quantize_cat(map, n);
  m.partition = build_strip_partition(n, m.strips);
  m.jacobian = coarse_jacobian_table(map, m.strips, m.Lambda, resolution);
  return m;
}

// ---------------------------------------------------------------- norm bounds

namespace {

// Compact factors A_ε for every word of one length, rows restricted to the
// support of the last letter.
struct FactorLevel {
  int length = 0;
  std::vector<Matrix> factors;
};

Matrix compress(const Matrix& m, double truncation) {
  if (m.cols() == 0 || m.rows() == 0) return Matrix(m.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Index keep = 0;
  while (keep < s.size() && s(keep) > truncation) ++keep;
  Matrix out = svd.matrixU().leftCols(keep);
  for (Index c = 0; c < keep; ++c) out.col(c) *= s(c);
  return out;
}

class FactorTree {
 public:
  FactorTree(const Matrix& u, const QuantumPartition& pi, double truncation)
      : pieces_(pi), truncation_(truncation) {
    const int K = pieces_.K;
    blocks_.assign(K, std::vector<Matrix>(K));
    for (int b = 0; b < K; ++b)
      for (int a = 0; a < K; ++a) {
        blocks_[b][a] = pieces_.block(u, b, a);
        blocks_[b][a].array().colwise() *= pieces_.values[b].cast<cplx>().array();
      }
    FactorLevel l0;
    l0.length = 1;
    for (int a = 0; a < K; ++a) {
      Matrix d = Matrix::Zero(pieces_.size(a), pieces_.size(a));
      d.diagonal() = pieces_.values[a].cast<cplx>();
      l0.factors.push_back(d);
    }
    levels_.push_back(std::move(l0));
  }

  const FactorLevel& level(int n) {
    while (int(levels_.size()) <= n) grow();
    return levels_[n];
  }
  const DiagonalPieces& pieces() const { return pieces_; }

 private:
  void grow() {
    const int K = pieces_.K;
    const FactorLevel& prev = levels_.back();
    FactorLevel next;
    next.length = prev.length + 1;
    const std::uint64_t count = word_count(K, next.length);
    const std::uint64_t stride = word_count(K, prev.length);
    next.factors.resize(count);
    parallel_for(std::size_t(count), [&](std::size_t i) {
      const std::uint64_t prefix = std::uint64_t(i) % stride;
      const int last_prev = int((prefix / word_count(K, prev.length - 1)) % std::uint64_t(K));
      const int letter = int(std::uint64_t(i) / stride);
      const Matrix& a = prev.factors[prefix];
      if (a.cols() == 0 || pieces_.size(letter) == 0) {
        next.factors[i] = Matrix(pieces_.size(letter), 0);
        return;
      }
      next.factors[i] = compress(blocks_[letter][last_prev] * a, truncation_);
    });
    levels_.push_back(std::move(next));
  }

  DiagonalPieces pieces_;
  double truncation_;
  std::vector<std::vector<Matrix>> blocks_;
  std::vector<FactorLevel> levels_;
};

int last_letter(std::uint64_t index, int K, int length) {
  return int((index / word_count(K, length - 1)) % std::uint64_t(K));
}

// Real vector with dot(pack(G), pack(H)) = tr(G H) for Hermitian G, H.
RealVector pack_hermitian(const Matrix& m) {
  const Index s = m.rows();
  RealVector v(s * s);
  Index k = 0;
  const double r2 = std::sqrt(2.0);
  for (Index j = 0; j < s; ++j) {
    v(k++) = m(j, j).real();
    for (Index i = 0; i < j; ++i) {
      v(k++) = r2 * m(i, j).real();
      v(k++) = r2 * m(i, j).imag();
    }
  }
  return v;
}

double spectral_norm_small(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

NormBound bound_at_level(FactorTree& tree, const Matrix& un, const JacobianTable& jac, int n,
                         const NormBoundOptions& options) {
  const DiagonalPieces& pieces = tree.pieces();
  const int K = pieces.K;
  const int length = n + 1;
  const FactorLevel& lvl = tree.level(n);
  const std::uint64_t W = word_count(K, length);
  NormBound out;
  out.n = n;
  out.pairs_total = W * W;
  if (out.pairs_total > options.max_pairs) {
    throw Error(ErrorKind::Budget,
                "word-pair count " + std::to_string(out.pairs_total) + " exceeds the budget",
                double(out.pairs_total));
  }
  std::vector<double> alpha(W, 1.0), beta(W, 1.0);
  if (options.weighted) {
    alpha = make_weights(jac, n, WeightMode::Alpha);
    beta = make_weights(jac, n, WeightMode::Beta);
  }
  for (const auto& f : lvl.factors) out.max_rank = std::max<int>(out.max_rank, int(f.cols()));

  // ‖A_ε′* X‖_F² = tr(G H) with G = A_ε′ A_ε′* and H = X X*, X = Uⁿ A_ε
  // restricted to the rows of the last letter of ε′
  std::vector<std::vector<Matrix>> ublock(K, std::vector<Matrix>(K));
  for (int b = 0; b < K; ++b)
    for (int a = 0; a < K; ++a) ublock[b][a] = pieces.block(un, b, a);
  std::vector<double> bound(W * W, 0.0);
  constexpr std::size_t kTile = 64;
  const std::size_t tiles = (std::size_t(W) + kTile - 1) / kTile;
  for (int b = 0; b < K; ++b) {
    const Index s = pieces.size(b);
    if (s == 0) continue;
    std::vector<std::uint64_t> members;
    for (std::uint64_t e = 0; e < W; ++e)
      if (last_letter(e, K, length) == b && lvl.factors[e].cols() > 0) members.push_back(e);
    if (members.empty()) continue;
    RealMatrix gp(Index(members.size()), s * s);
    RealVector gn(Index(members.size()));
    parallel_for(members.size(), [&](std::size_t i) {
      const Matrix& f = lvl.factors[members[i]];
      gp.row(Index(i)) = pack_hermitian(f * f.adjoint());
      gn(Index(i)) = gp.row(Index(i)).norm();
    });
    parallel_for(tiles, [&](std::size_t t) {
      const std::uint64_t lo = t * kTile;
      const std::uint64_t hi = std::min<std::uint64_t>(W, lo + kTile);
      RealMatrix hp = RealMatrix::Zero(Index(hi - lo), s * s);
      for (std::uint64_t e = lo; e < hi; ++e) {
        const Matrix& f = lvl.factors[e];
        if (f.cols() == 0) continue;
        const Matrix x = ublock[b][last_letter(e, K, length)] * f;
        hp.row(Index(e - lo)) = pack_hermitian(x * x.adjoint());
      }
      const RealMatrix fro2 = gp * hp.transpose();
      for (std::uint64_t e = lo; e < hi; ++e) {
        const double hn = hp.row(Index(e - lo)).norm();
        if (hn == 0.0) continue;
        for (std::size_t i = 0; i < members.size(); ++i) {
          const double v = fro2(Index(i), Index(e - lo));
          const double slack = 1e-10 * gn(Index(i)) * hn;
          bound[e * W + members[i]] = alpha[e] * beta[members[i]] * std::sqrt(std::max(v, 0.0) + slack);
        }
      }
    });
  }

  std::vector<std::uint64_t> order;
  order.reserve(std::size_t(W * W));
  for (std::uint64_t p = 0; p < W * W; ++p)
    if (bound[p] > 0.0) order.push_back(p);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint64_t x, std::uint64_t y) { return bound[x] > bound[y]; });

  constexpr std::size_t kChunk = 64;
  double best = 0.0;
  std::uint64_t best_pair = 0;
  bool found = false;
  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    if (bound[order[start]] <= best) break;
    const std::size_t end = std::min(order.size(), start + kChunk);
    std::vector<double> vals(end - start, -1.0);
    const double threshold = best;
    parallel_for(end - start, [&](std::size_t i) {
      const std::uint64_t p = order[start + i];
      if (bound[p] <= threshold) return;
      const std::uint64_t e = p / W, ep = p % W;
      const int b = last_letter(ep, K, length);
      const Matrix core =
          lvl.factors[ep].adjoint() * (ublock[b][last_letter(e, K, length)] * lvl.factors[e]);
      vals[i] = alpha[e] * beta[ep] * spectral_norm_small(core);
    });
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (vals[i] < 0.0) continue;
      ++out.pairs_evaluated;
      if (!found || vals[i] > best) {
        best = vals[i];
        best_pair = order[start + i];
        found = true;
      }
    }
  }
  out.value = best;
  out.arg_in = best_pair / W;
  out.arg_out = best_pair % W;
  out.max_norm = found ? best / (alpha[out.arg_in] * beta[out.arg_out]) : 0.0;
  return out;
}

}  // namespace

NormBound refined_norm_bound(const OperatorHandle& u, const QuantumPartition& pi,
                             const JacobianTable& jac, int n, const NormBoundOptions& options) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "word length must be nonnegative", n);
  if (jac.K() != static_cast<int>(pi.size())) {
    throw Error(ErrorKind::DimensionMismatch, "Jacobian table alphabet differs from partition");
  }
  const std::uint64_t w = word_count(jac.K(), n + 1);
  if (w > 1'000'000ULL || w * w > options.max_pairs) {
    throw Error(ErrorKind::Budget,
                "word-pair count " + std::to_string(w) + "^2 exceeds the budget", double(w) * double(w));
  }
  const Matrix um = dense_of(u);
  FactorTree tree(um, pi, options.truncation);
  return bound_at_level(tree, matrix_power(um, n), jac, n, options);
}

PressureCertificate pressure_bound_certificate(const TorusModel& model, const StateVector& psi,
                                               int n, const std::optional<NormBound>& bound) {
  const double residual = residual_of_eigen(model.U, psi.amps);
  if (residual > 1e-8) {
    throw Error(ErrorKind::Precondition, "pressure certificate needs an eigenvector of U", residual);
  }
  if (!psi.is_normalized(1e-9)) {
    throw Error(ErrorKind::InvalidArgument, "state is not normalized", psi.norm());
  }
  PressureCertificate pc;
  if (bound && bound->n == n) {
    pc.bound = *bound;
  } else {
    pc.bound = refined_norm_bound(model.U, model.partition, model.jacobian, n);
  }
  const auto alpha = make_weights(model.jacobian, n, WeightMode::Alpha);
  const auto beta = make_weights(model.jacobian, n, WeightMode::Beta);
  const auto m_in = refined_masses(psi, n, model.U, model.partition);
  Vector un_psi = psi.amps;
  for (int t = 0; t < n; ++t) un_psi = model.U.apply(un_psi);
  const auto m_out = refined_masses(StateVector(un_psi), n, model.U, model.partition);

  EupCertificate& c = pc.cert;
  c.mode = PartitionMode::Single;
  c.c_O = pc.bound.value;
  c.A = *std::max_element(alpha.begin(), alpha.end());
  c.B = *std::max_element(beta.begin(), beta.end());
  c.eps = 0.0;
  c.n_terms = m_in.size();
  c.p_alpha = pressure_of_masses(m_in, WeightFamily(alpha));
  c.p_beta = pressure_of_masses(m_out, WeightFamily(beta));
  finalize_certificate(c);
  pc.h_n = entropy_of_masses(m_in);
  pc.rhs_paper_form = -2.0 * std::log(kTwoPi * double(model.N));
  return pc;
}

// ---------------------------------------------------------------- subadditivity

double subadditivity_defect(const std::vector<CylinderMeasure>& levels, const JacobianTable& jac,
                            int n_o, int m) {
  if (m < 1 || n_o < 0) throw Error(ErrorKind::InvalidArgument, "need n_o >= 0 and m >= 1");
  if (int(levels.size()) <= n_o + m) {
    throw Error(ErrorKind::InvalidArgument, "not enough cylinder levels for n_o + m");
  }
  const auto p = [&](int d) { return entropy_pressure(levels[d], jac, WeightMode::Alpha).p_alpha; };
  return p(n_o + m) - p(n_o) - p(m - 1);
}

SubadditivityResult subadditivity_check(const TorusModel& model, const StateVector& psi, int n_o,
                                        int m, const EhrenfestConfig& config) {
  if (n_o + m > config.n_E) {
    throw Error(ErrorKind::Precondition,
                "n_o + m = " + std::to_string(n_o + m) + " exceeds the Ehrenfest time " +
                    std::to_string(config.n_E),
                double(n_o + m));
  }
  std::vector<CylinderMeasure> levels;
  const auto tables = cylinder_levels(psi.amps, n_o + m, model.U, model.partition);
  for (int d = 0; d <= n_o + m; ++d) {
    std::vector<double> v(tables[d].data(), tables[d].data() + tables[d].rows());
    levels.push_back(CylinderMeasure::from_dense(model.K(), d, v));
  }
  SubadditivityResult r;
  r.defect = subadditivity_defect(levels, model.jacobian, n_o, m);
  r.R = 3.0 * model.lambda();
  r.ok = r.defect <= r.R + 0.1;
  return r;
}

// ---------------------------------------------------------------- shift invariance

double shift_invariance_defect(const CylinderMeasure& long_measure, int n) {
  const CylinderMeasure shifted = long_measure.shift(n);
  CylinderMeasure base = long_measure;
  for (int i = 0; i < n; ++i) base = base.marginalize_last();
  double worst = 0.0;
  std::size_t i = 0, j = 0;
  const auto& wa = shifted.words();
  const auto& wb = base.words();
  while (i < wa.size() || j < wb.size()) {
    if (j >= wb.size() || (i < wa.size() && wa[i] < wb[j])) {
      worst = std::max(worst, std::abs(shifted.masses()[i++]));
    } else if (i >= wa.size() || wb[j] < wa[i]) {
      worst = std::max(worst, std::abs(base.masses()[j++]));
    } else {
      worst = std::max(worst, std::abs(shifted.masses()[i++] - base.masses()[j++]));
    }
  }
  return worst;
}

double shift_invariance_defect(const TorusModel& model, const StateVector& psi, int n, int n_o,
                               double gamma) {
  const int t = egorov_time(model.N, gamma, model.lambda());
  if (n + n_o > 2 * t) {
    throw Error(ErrorKind::Budget,
                "n + n_o = " + std::to_string(n + n_o) + " exceeds twice the Egorov time " +
                    std::to_string(t),
                double(n + n_o));
  }
  const auto mu = cylinder_measure(psi, n + n_o, model.U, model.partition);
  return shift_invariance_defect(mu, n);
}

// ---------------------------------------------------------------- norm decay

NormDecayScan norm_decay_scan(const OperatorHandle& u, const QuantumPartition& pi,
                              const JacobianTable& jac, int n_max, const NormBoundOptions& options) {
  if (jac.K() != static_cast<int>(pi.size())) {
    throw Error(ErrorKind::DimensionMismatch, "Jacobian table alphabet differs from partition");
  }
  const std::uint64_t w = word_count(jac.K(), n_max + 1);
  if (w > 1'000'000ULL || w * w > options.max_pairs) {
    throw Error(ErrorKind::Budget, "norm decay scan exceeds the pair budget", double(w) * double(w));
  }
  NormBoundOptions plain = options;
  plain.weighted = false;
  const Matrix um = dense_of(u);
  FactorTree tree(um, pi, options.truncation);
  NormDecayScan scan;
  Matrix un = Matrix::Identity(um.rows(), um.cols());
  const double two_pi_n = kTwoPi * double(um.rows());
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) un = um * un;
    const NormBound b = bound_at_level(tree, un, jac, n, plain);
    NormDecayRow row;
    row.n = n;
    row.max_norm = b.max_norm;
    row.arg_in = b.arg_in;
    row.arg_out = b.arg_out;
    const auto wi = SymbolWord::from_index(b.arg_in, n + 1, jac.K());
    const auto wo = SymbolWord::from_index(b.arg_out, n + 1, jac.K());
    row.shape = two_pi_n * std::exp(0.5 * jac.log_word(wi.letters) + jac.log_word(wo.letters));
    scan.C = std::max(scan.C, row.max_norm / row.shape);
    scan.rows.push_back(row);
  }
  for (auto& r : scan.rows) r.bound = scan.C * r.shape;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& r : scan.rows) {
    if (r.n < 1 || r.max_norm <= 0.0) continue;
    const double y = std::log(r.max_norm);
    sx += r.n;
    sy += y;
    sxx += double(r.n) * r.n;
    sxy += r.n * y;
    ++cnt;
  }
  if (cnt >= 2) scan.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return scan;
}

// ---------------------------------------------------------------- Egorov

std::vector<CommutatorRow> egorov_commutator_scan(const ClassicalCatMap& map, Index n,
                                                  const Lattice& v, const Lattice& w, int t_max) {
  if (t_max < 0) throw Error(ErrorKind::InvalidArgument, "t_max must be nonnegative", t_max);
  const Matrix u = quantize_cat(map, n).dense_payload();
  const Matrix ustar = u.adjoint();
  Matrix a = weyl_translation(n, v).dense_payload();
  Matrix b = weyl_translation(n, w).dense_payload();
  Lattice x = v, y = w;
  std::vector<CommutatorRow> rows;
  NormOptions opts;
  opts.tolerance = 1e-12;
  for (int t = 0; t <= t_max; ++t) {
    if (t > 0) {
      a = ustar * a * u;
      b = u * b * ustar;
      x = map.apply_inverse(x);
      y = map.apply(y);
      x = {mod(x[0], n), mod(x[1], n)};
      y = {mod(y[0], n), mod(y[1], n)};
    }
    const Matrix comm = a * b - b * a;
    CommutatorRow r;
    r.t = t;
    r.norm = power_iteration_norm([&](const Vector& z) { return Vector(comm * z); },
                                  [&](const Vector& z) { return Vector(comm.adjoint() * z); }, n,
                                  opts)
                 .value;
    const std::int64_t omega = mod(x[0] * y[1] - x[1] * y[0], n);
    r.closed_form = std::abs(1.0 - std::polar(1.0, kTwoPi * double(omega) / double(n)));
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- scars

std::vector<double> disc_masses(const Matrix& states, const Point& center, double radius,
                                int grid) {
  const Index n = states.rows();
  std::vector<Vector> cells;
  for (int g1 = 0; g1 < grid; ++g1) {
    double dq = std::abs(double(g1) / grid - center[0]);
    dq = std::min(dq, 1.0 - dq);
    for (int g2 = 0; g2 < grid; ++g2) {
      double dp = std::abs(double(g2) / grid - center[1]);
      dp = std::min(dp, 1.0 - dp);
      if (dq * dq + dp * dp <= radius * radius)
        cells.push_back(coherent_state(n, {double(g1) / grid, double(g2) / grid}).amps);
    }
  }
  Matrix c(Index(cells.size()), n);
  for (std::size_t i = 0; i < cells.size(); ++i) c.row(Index(i)) = cells[i].adjoint();
  const RealMatrix h = (c * states).cwiseAbs2();
  std::vector<double> out(std::size_t(states.cols()));
  for (Index k = 0; k < states.cols(); ++k)
    out[std::size_t(k)] = h.col(k).sum() * double(n) / double(grid * grid);
  return out;
}

ScarQuasimode scar_quasimode(const OperatorHandle& u, Index n, int T, const Point& center,
                             const ScarOptions& options) {
  if (T < 1) throw Error(ErrorKind::InvalidArgument, "averaging length T must be at least 1", T);
  const int shift = options.centred ? T / 2 : 0;
  Vector v = coherent_state(n, center).amps;
  for (int s = 0; s < shift; ++s) v = u.apply_adjoint(v);
  Matrix window(n, T);
  for (int t = 0; t < T; ++t) {
    window.col(t) = v;
    v = u.apply(v);
  }
  const auto combine = [&](double theta) {
    Vector s = Vector::Zero(n);
    for (int t = 0; t < T; ++t) s += std::polar(1.0, -theta * t) * window.col(t);
    return s;
  };

  ScarQuasimode q;
  q.T = T;
  q.centred = options.centred;
  if (options.theta) {
    q.theta = *options.theta;
  } else {
    q.theta_scanned = true;
    const auto sd = eig_unitary(u);
    std::vector<double> phases;
    for (Index i = 0; i < sd.dim(); ++i) {
      const double ph = sd.phase(i);
      if (phases.empty() || ph - phases.back() > 1e-9) phases.push_back(ph);
    }
    Matrix cands(n, Index(phases.size()));
    std::vector<bool> usable(phases.size(), true);
    for (std::size_t i = 0; i < phases.size(); ++i) {
      Vector s = combine(phases[i]);
      const double norm = s.norm();
      if (norm < 1e-8) {
        usable[i] = false;
        s.setZero();
      } else {
        s /= norm;
      }
      cands.col(Index(i)) = s;
    }
    const auto masses = disc_masses(cands, center, options.radius, options.grid);
    double best = -1.0;
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if (usable[i] && masses[i] > best) {
        best = masses[i];
        q.theta = phases[i];
      }
    }
    if (best < 0.0) throw Error(ErrorKind::Precondition, "no eigenphase gives a nonzero average");
  }
  const Vector s = combine(q.theta);
  if (s.norm() < 1e-8) {
    throw Error(ErrorKind::Precondition,
                "time average vanishes at theta = " + std::to_string(q.theta) + "; try another theta",
                s.norm());
  }
  q.state = StateVector::normalized(s);
  q.defect = (u.apply(q.state.amps) - std::polar(1.0, q.theta) * q.state.amps).norm();
  Matrix one(n, 1);
  one.col(0) = q.state.amps;
  q.disc_mass = disc_masses(one, center, options.radius, options.grid)[0];
  return q;
}

// ---------------------------------------------------------------- classical side

ClassicalMeasureSpec ClassicalMeasureSpec::parse(const std::string& text) {
  ClassicalMeasureSpec s;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "lebesgue") {
      s.kind = Kind::Lebesgue;
      if (!rest.empty()) s.resolution = std::stoi(rest);
      if (s.resolution < 2) throw Error(ErrorKind::InvalidArgument, "lattice too small");
      return s;
    }
    if (kind == "fixed") {
      s.kind = Kind::PeriodicOrbit;
      return s;
    }
    if (kind == "periodic") {
      s.kind = Kind::PeriodicOrbit;
      const auto comma = rest.find(',');
      const auto slash = rest.find('/');
      if (comma == std::string::npos || slash == std::string::npos || slash < comma) {
        throw Error(ErrorKind::InvalidArgument, "expected periodic:<q>,<p>/<den>");
      }
      s.point = {std::stoll(rest.substr(0, comma)), std::stoll(rest.substr(comma + 1, slash - comma - 1))};
      s.denominator = std::stoll(rest.substr(slash + 1));
      if (s.denominator < 1) throw Error(ErrorKind::InvalidArgument, "denominator must be positive");
      return s;
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::InvalidArgument, "malformed classical measure spec '" + text + "'");
  }
  throw Error(ErrorKind::InvalidArgument, "unknown classical measure spec '" + text + "'");
}

CylinderMeasure classical_cylinder_measure(const ClassicalCatMap& map,
                                           const ClassicalMeasureSpec& spec, int K, int n) {
  if (K < 2) throw Error(ErrorKind::InvalidArgument, "need K >= 2", K);
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "word length must be nonnegative", n);
  if (word_count(K, n + 1) == std::uint64_t(-1)) {
    throw Error(ErrorKind::Budget, "word index does not fit in 64 bits");
  }
  const auto code = [&](std::int64_t q, std::int64_t p, std::int64_t den) {
    std::uint64_t idx = 0;
    for (int t = 0; t <= n; ++t) {
      idx = idx * std::uint64_t(K) + std::uint64_t((q * K) / den);
      const std::int64_t q1 = mod(map.a() * q + map.b() * p, den);
      const std::int64_t p1 = mod(map.c() * q + map.d() * p, den);
      q = q1;
      p = p1;
    }
    return idx;
  };

  std::vector<std::uint64_t> words;
  std::vector<double> masses;
  if (spec.kind == ClassicalMeasureSpec::Kind::Lebesgue) {
    const std::int64_t res = spec.resolution;
    const std::size_t slabs = std::max<std::size_t>(1, std::min<std::size_t>(thread_count(), std::size_t(res)));
    std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> counts(slabs);
    parallel_for(slabs, [&](std::size_t s) {
      auto& c = counts[s];
      for (std::int64_t q = std::int64_t(s); q < res; q += std::int64_t(slabs))
        for (std::int64_t p = 0; p < res; ++p) ++c[code(q, p, res)];
    });
    std::unordered_map<std::uint64_t, std::uint64_t> all;
    for (const auto& c : counts)
      for (const auto& [k, v] : c) all[k] += v;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> sorted(all.begin(), all.end());
    std::sort(sorted.begin(), sorted.end());
    const double total = double(res) * double(res);
    for (const auto& [k, v] : sorted) {
      words.push_back(k);
      masses.push_back(double(v) / total);
    }
  } else {
    const std::int64_t den = spec.denominator;
    Lattice start = {mod(spec.point[0], den), mod(spec.point[1], den)};
    std::vector<Lattice> orbit = {start};
    for (;;) {
      Lattice nx = map.apply(orbit.back());
      nx = {mod(nx[0], den), mod(nx[1], den)};
      if (nx == start) break;
      orbit.push_back(nx);
      if (orbit.size() > 10'000'000) throw Error(ErrorKind::Budget, "orbit too long");
    }
    std::map<std::uint64_t, std::uint64_t> counts;
    for (const auto& pt : orbit) ++counts[code(pt[0], pt[1], den)];
    for (const auto& [k, v] : counts) {
      words.push_back(k);
      masses.push_back(double(v) / double(orbit.size()));
    }
  }
  // words were built time-forwards with the earliest letter most significant,
  // which is the time-backwards orientation with ε₀ least significant
  return CylinderMeasure(K, n, std::move(words), std::move(masses));
}

EntropyRate entropy_rate(const CylinderMeasure& measure, const JacobianTable& jac) {
  if (measure.n() < 1) throw Error(ErrorKind::InvalidArgument, "entropy rate needs n_o >= 1");
  if (measure.K() != jac.K()) {
    throw Error(ErrorKind::DimensionMismatch, "measure alphabet differs from Jacobian table");
  }
  EntropyRate r;
  const double h = measure.entropy();
  CylinderMeasure lower = measure.marginalize_last();
  r.rate = h / double(measure.n());
  r.increment = h - lower.entropy();
  while (lower.n() > 1) lower = lower.marginalize_last();
  double avg = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i)
    avg += lower.masses()[i] * log_j_of_cylinder(jac, lower.words()[i], lower.K(), 2);
  r.jacobian_average = -avg;
  r.ruelle_ok = r.increment <= std::abs(r.jacobian_average) + 0.05;
  return r;
}

}  // namespace eigenscope
