#include "eigenscope/catmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eigenscope/parallel.hpp"

namespace eigenscope {

namespace {

std::int64_t mod(std::int64_t x, std::int64_t m) {
  const std::int64_t r = x % m;
  return r < 0 ? r + m : r;
}

double wrap01(double x) {
  double r = x - std::floor(x);
  if (r >= 1.0) r = 0.0;
  return r;
}

double torus_distance_1d(double x, double y) {
  const double d = std::abs(wrap01(x) - wrap01(y));
  return std::min(d, 1.0 - d);
}

// C^∞ step: 0 for u <= 0, 1 for u >= 1.
double smooth_step(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double f0 = std::exp(-1.0 / u);
  const double f1 = std::exp(-1.0 / (1.0 - u));
  return f0 / (f0 + f1);
}

Eigen::Vector2d eigen_direction(double a, double b, double c, double d, double mu) {
  Eigen::Vector2d v;
  if (std::abs(b) >= std::abs(c)) {
    v << b, mu - a;
  } else {
    v << mu - d, c;
  }
  v.normalize();
  if (v(0) < 0.0 || (v(0) == 0.0 && v(1) < 0.0)) v = -v;
  return v;
}

}  // namespace

double lyapunov(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (a * d - b * c != 1) {
    throw Error(ErrorKind::InvalidArgument, "map matrix must have determinant 1",
                static_cast<double>(a * d - b * c));
  }
  const double t = static_cast<double>(a + d);
  if (std::abs(t) <= 2.0) {
    throw Error(ErrorKind::InvalidArgument, "not Anosov: |trace| <= 2", t);
  }
  return std::log((std::abs(t) + std::sqrt(t * t - 4.0)) / 2.0);
}

ClassicalCatMap::ClassicalCatMap(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d)
    : a_(a), b_(b), c_(c), d_(d), lambda_(lyapunov(a, b, c, d)) {
  const double t = static_cast<double>(a + d);
  const double mu = (t > 0 ? 1.0 : -1.0) * std::exp(lambda_);
  unstable_ = eigen_direction(double(a), double(b), double(c), double(d), mu);
  stable_ = eigen_direction(double(a), double(b), double(c), double(d), 1.0 / mu);
}

bool ClassicalCatMap::quantizable() const { return (a_ * b_) % 2 == 0 && (c_ * d_) % 2 == 0; }

Lattice ClassicalCatMap::apply(const Lattice& v) const {
  return {a_ * v[0] + b_ * v[1], c_ * v[0] + d_ * v[1]};
}

Lattice ClassicalCatMap::apply_inverse(const Lattice& v) const {
  return {d_ * v[0] - b_ * v[1], -c_ * v[0] + a_ * v[1]};
}

ClassicalCatMap ClassicalCatMap::power(int t) const {
  std::int64_t m[4] = {1, 0, 0, 1};
  const std::int64_t base[4] = {t >= 0 ? a_ : d_, t >= 0 ? b_ : -b_, t >= 0 ? c_ : -c_,
                                t >= 0 ? d_ : a_};
  for (int s = 0; s < std::abs(t); ++s) {
    const std::int64_t r[4] = {m[0] * base[0] + m[1] * base[2], m[0] * base[1] + m[1] * base[3],
                               m[2] * base[0] + m[3] * base[2], m[2] * base[1] + m[3] * base[3]};
    std::copy(r, r + 4, m);
  }
  if (t == 0) throw Error(ErrorKind::InvalidArgument, "A^0 is not hyperbolic");
  return ClassicalCatMap(m[0], m[1], m[2], m[3]);
}

std::string ClassicalCatMap::describe() const {
  std::ostringstream s;
  s << "[[" << a_ << "," << b_ << "],[" << c_ << "," << d_ << "]]";
  return s.str();
}

Point classical_step(const ClassicalCatMap& map, const Point& rho) {
  const double q = double(map.a()) * rho[0] + double(map.b()) * rho[1];
  const double p = double(map.c()) * rho[0] + double(map.d()) * rho[1];
  return {wrap01(q), wrap01(p)};
}

OperatorHandle quantize_cat(const ClassicalCatMap& map, Index n) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "N must be at least 2", double(n));
  if (!map.quantizable()) {
    throw Error(ErrorKind::InvalidArgument,
                "map " + map.describe() + " violates the evenness condition (a*b, c*d even)");
  }
  const std::int64_t b = map.b();
  if (std::gcd(b, static_cast<std::int64_t>(n)) > 1) {
    throw Error(ErrorKind::InvalidArgument,
                "gcd(b, N) > 1 for map " + map.describe() + "; choose N coprime to b");
  }
  if (std::abs(b) != 1) {
    throw Error(ErrorKind::InvalidArgument,
                "only maps with |b| = 1 give a unitary kernel; got " + map.describe());
  }
  const std::int64_t nn = n;
  const std::int64_t period = 2 * nn;  // exponent is π r/(bN), periodic in r mod 2N
  const double base = kPi / double(b * nn);
  std::vector<cplx> phase_table(static_cast<std::size_t>(period));
  for (std::int64_t r = 0; r < period; ++r) phase_table[r] = std::polar(1.0, base * double(r));

  Matrix u(n, n);
  for (Index j = 0; j < n; ++j) {
    const std::int64_t aj = mod(map.a() * j * j, period);
    for (Index jp = 0; jp < n; ++jp) {
      const std::int64_t r = mod(aj - 2 * j * jp + map.d() * jp * jp, period);
      u(jp, j) = phase_table[static_cast<std::size_t>(r)];
    }
  }
  cplx gauss = u.col(0).sum();
  cplx sigma = 1.0;
  if (std::abs(gauss) > 1e-9 * std::sqrt(double(n))) sigma = std::conj(gauss) / std::abs(gauss);
  u *= sigma / std::sqrt(double(n));
  return OperatorHandle::dense(std::move(u));
}

OperatorHandle weyl_translation(Index n, const Lattice& v) {
  const std::int64_t nn = n;
  const std::int64_t period = 2 * nn;
  const std::int64_t v1 = mod(v[0], nn);
  // e^{iπ v1 v2/N} uses the unreduced product; e^{2πi v2 j/N} only needs v2 mod N
  const std::int64_t front = mod(v[0] * v[1], period);
  const cplx global = std::polar(1.0, kPi * double(front) / double(nn));
  Matrix t = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const std::int64_t r = mod(2 * mod(v[1], nn) * j, period);
    t(j, mod(j - v1, nn)) = global * std::polar(1.0, kPi * double(r) / double(nn));
  }
  return OperatorHandle::dense(std::move(t));
}

namespace {
// T(v) = diag(phase) · shift by v1, as (column offset, row phases)
std::pair<std::int64_t, Vector> translation_parts(Index n, const Lattice& v) {
  const std::int64_t nn = n, period = 2 * nn;
  const std::int64_t front = mod(v[0] * v[1], period);
  Vector ph(n);
  for (Index j = 0; j < n; ++j) {
    const std::int64_t r = mod(front + 2 * mod(v[1], nn) * j, period);
    ph(j) = std::polar(1.0, kPi * double(r) / double(nn));
  }
  return {mod(v[0], nn), ph};
}
}  // namespace

TranslationDefect translation_egorov_defect(const Matrix& u, const ClassicalCatMap& map,
                                            const Lattice& v) {
  const Index n = u.rows();
  if (u.cols() != n) throw Error(ErrorKind::DimensionMismatch, "propagator must be square");
  const auto [s1, p1] = translation_parts(n, v);
  const auto [s2, p2] = translation_parts(n, map.apply(v));
  // U T(v) and T(Av) U
  Matrix left(n, n), right(n, n);
  for (Index k = 0; k < n; ++k) {
    const Index j = mod(k + s1, n);
    left.col(k) = u.col(j) * p1(j);
  }
  for (Index j = 0; j < n; ++j) right.row(j) = p2(j) * u.row(mod(j - s2, n));
  const cplx overlap = right.cwiseProduct(left.conjugate()).sum();
  TranslationDefect d;
  d.phase = std::abs(overlap) > 0.0 ? std::conj(overlap) / std::abs(overlap) : cplx(1.0);
  const Matrix diff = left - d.phase * right;
  NormOptions opts;
  opts.tolerance = 1e-6;
  d.defect = power_iteration_norm([&](const Vector& x) { return Vector(diff * x); },
                                  [&](const Vector& x) { return Vector(diff.adjoint() * x); }, n,
                                  opts)
                 .value;
  return d;
}

StateVector coherent_state(Index n, const Point& center, double squeeze) {
  if (!(squeeze > 0.0)) throw Error(ErrorKind::InvalidArgument, "squeeze must be positive", squeeze);
  const double nn = double(n);
  const int reach = 1 + static_cast<int>(std::ceil(squeeze * std::sqrt(40.0 / (kPi * nn))));
  Vector v = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    const double x0 = double(j) / nn - center[0];
    cplx s = 0.0;
    for (int m = -reach; m <= reach; ++m) {
      const double x = x0 + m;
      s += std::exp(-kPi * nn * x * x / (squeeze * squeeze)) *
           std::polar(1.0, kTwoPi * nn * center[1] * x);
    }
    v(j) = s;
  }
  return StateVector::normalized(std::move(v));
}

StripProfile::StripProfile(const StripPartitionSpec& spec) : spec_(spec) {
  if (spec.K < 2) throw Error(ErrorKind::InvalidArgument, "strip partition needs K >= 2", spec.K);
  if (!(spec.eta > 0.0) || !(spec.eta < 1.0 / (2.0 * spec.K))) {
    throw Error(ErrorKind::InvalidArgument,
                "smoothing width eta must lie in (0, 1/(2K)) = (0, " +
                    std::to_string(1.0 / (2.0 * spec.K)) + ")",
                spec.eta);
  }
}

double StripProfile::raw(int k, double x) const {
  const double lo = double(k) / spec_.K;
  const double hi = double(k + 1) / spec_.K;
  const double w = 2.0 * spec_.eta;
  double s = 0.0;
  for (int m = -1; m <= 1; ++m) {
    const double y = wrap01(x) + m;
    s += smooth_step((y - lo + spec_.eta) / w) - smooth_step((y - hi + spec_.eta) / w);
  }
  return std::max(s, 0.0);
}

std::vector<double> StripProfile::values(double x) const {
  std::vector<double> v(static_cast<std::size_t>(spec_.K));
  double s = 0.0;
  for (int k = 0; k < spec_.K; ++k) {
    v[k] = raw(k, x);
    s += v[k] * v[k];
  }
  const double inv = 1.0 / std::sqrt(s);
  for (auto& e : v) e *= inv;
  return v;
}

bool StripProfile::in_support(int k, double x) const {
  const double mid = (double(k) + 0.5) / spec_.K;
  return torus_distance_1d(x, mid) < 0.5 / spec_.K + spec_.eta;
}

QuantumPartition build_strip_partition(Index n, const StripPartitionSpec& spec) {
  const StripProfile profile(spec);
  RealMatrix p(n, spec.K);
  for (Index j = 0; j < n; ++j) {
    const auto v = profile.values(double(j) / double(n));
    for (int k = 0; k < spec.K; ++k) p(j, k) = v[k];
  }
  std::vector<OperatorHandle> ops;
  ops.reserve(static_cast<std::size_t>(spec.K));
  for (int k = 0; k < spec.K; ++k) ops.push_back(OperatorHandle::diagonal(p.col(k).cast<cplx>()));
  return QuantumPartition(std::move(ops));
}

JacobianTable JacobianTable::from_transitions(
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& realizable, double lambda,
    double Lambda_penalty, double grid_step) {
  if (realizable.rows() != realizable.cols() || realizable.rows() < 1) {
    throw Error(ErrorKind::DimensionMismatch, "transition matrix must be square");
  }
  if (!(lambda > 0.0) || !(Lambda_penalty > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "exponents must be positive");
  }
  JacobianTable t;
  const Index k = realizable.rows();
  t.realizable_ = realizable;
  t.lambda_ = lambda;
  t.Lambda_ = Lambda_penalty;
  t.grid_step_ = grid_step;
  t.log_j1_.resize(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) t.log_j1_(i, j) = realizable(i, j) ? -lambda : -Lambda_penalty;
  t.j1_ = t.log_j1_.array().exp().matrix();
  return t;
}

double JacobianTable::log_word(const std::vector<int>& letters) const {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < letters.size(); ++i) {
    const int e0 = letters[i], e1 = letters[i + 1];
    if (e0 < 0 || e1 < 0 || e0 >= K() || e1 >= K()) {
      throw Error(ErrorKind::InvalidArgument, "letter outside the Jacobian table alphabet");
    }
    s += log_j1_(e0, e1);
  }
  return s;
}

double JacobianTable::word(const std::vector<int>& letters) const {
  return std::exp(log_word(letters));
}

int JacobianTable::penalized_steps(const std::vector<int>& letters) const {
  int count = 0;
  for (std::size_t i = 0; i + 1 < letters.size(); ++i)
    if (!realizable_(letters[i], letters[i + 1])) ++count;
  return count;
}

JacobianTable coarse_jacobian_table(const ClassicalCatMap& map, const StripPartitionSpec& spec,
                                    double Lambda_penalty, int resolution) {
  if (resolution < 256) {
    throw Error(ErrorKind::InvalidArgument, "grid resolution must be at least 256", resolution);
  }
  const StripProfile profile(spec);
  const int k = spec.K;
  const std::int64_t res = resolution;
  // strips whose support contains each grid coordinate i/res
  std::vector<std::vector<int>> owners(static_cast<std::size_t>(res));
  for (std::int64_t i = 0; i < res; ++i)
    for (int s = 0; s < k; ++s)
      if (profile.in_support(s, double(i) / double(res))) owners[i].push_back(s);

  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> rows(
      static_cast<std::size_t>(res), Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(k, k, false));
  parallel_for(static_cast<std::size_t>(res), [&](std::size_t iq) {
    auto& r = rows[iq];
    for (std::int64_t ip = 0; ip < res; ++ip) {
      const std::int64_t q1 = mod(map.a() * std::int64_t(iq) + map.b() * ip, res);
      for (int e0 : owners[iq])
        for (int e1 : owners[q1]) r(e0, e1) = true;
    }
  });
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> all =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(k, k, false);
  for (const auto& r : rows) all = all.array() || r.array();
  return JacobianTable::from_transitions(all, map.lambda(), Lambda_penalty, 1.0 / double(res));
}

RealMatrix husimi(const StateVector& psi, int grid) {
  if (grid < 8) throw Error(ErrorKind::InvalidArgument, "Husimi grid must be at least 8", grid);
  const Index n = psi.dim();
  RealMatrix h(grid, grid);
  parallel_for(static_cast<std::size_t>(grid), [&](std::size_t g1) {
    for (int g2 = 0; g2 < grid; ++g2) {
      const auto c = coherent_state(n, {double(g1) / grid, double(g2) / grid});
      h(static_cast<Index>(g1), g2) = std::norm(c.amps.dot(psi.amps));
    }
  });
  return h;
}

double husimi_disc_mass(const RealMatrix& h, Index n, const Point& center, double radius) {
  const Index g = h.rows();
  double s = 0.0;
  for (Index a = 0; a < g; ++a) {
    const double dq = torus_distance_1d(double(a) / double(g), center[0]);
    for (Index b = 0; b < h.cols(); ++b) {
      const double dp = torus_distance_1d(double(b) / double(h.cols()), center[1]);
      if (dq * dq + dp * dp <= radius * radius) s += h(a, b);
    }
  }
  return s * double(n) / double(g * h.cols());
}

}  // namespace eigenscope
