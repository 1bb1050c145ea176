#include <doctest.h>

#include <cmath>

#include "eigenscope/catmap.hpp"
#include "eigenscope/rng.hpp"
#include "helpers.hpp"

using namespace eigenscope;
using namespace testutil;

namespace {
double torus_dist(const Point& a, const Point& b) {
  double s = 0;
  for (int i = 0; i < 2; ++i) {
    double d = std::abs(a[i] - b[i]);
    d = std::min(d, 1.0 - d);
    s += d * d;
  }
  return std::sqrt(s);
}
}  // namespace

TEST_CASE("classical step fixed points and rational orbits") {
  const ClassicalCatMap a;
  const auto z = classical_step(a, {0.0, 0.0});
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
  const auto h = classical_step(a, {0.5, 0.5});
  CHECK(h[0] == 0.5);
  CHECK(h[1] == 0.5);

  // orbit of (1/5, 0) in exact arithmetic on the 5-lattice
  Lattice v = {1, 0};
  int period = 0;
  for (int t = 1; t <= 625; ++t) {
    v = a.apply(v);
    v = {((v[0] % 5) + 5) % 5, ((v[1] % 5) + 5) % 5};
    if (v[0] == 1 && v[1] == 0) {
      period = t;
      break;
    }
  }
  CHECK(period > 0);
  Point rho = {0.2, 0.0};
  for (int t = 0; t < period; ++t) rho = classical_step(a, rho);
  CHECK(torus_dist(rho, {0.2, 0.0}) <= 1e-9);
}

TEST_CASE("lyapunov exponents") {
  CHECK(lyapunov(2, 1, 3, 2) == doctest::Approx(std::log(2 + std::sqrt(3.0))).epsilon(1e-15));
  CHECK(lyapunov(2, 1, 3, 2) == doctest::Approx(1.3169579).epsilon(1e-7));
  CHECK(lyapunov(2, 1, 1, 1) == doctest::Approx(0.9624237).epsilon(1e-7));
  try {
    (void)lyapunov(1, 1, 0, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("not Anosov") != std::string::npos);
  }
}

TEST_CASE("map directions and quantizability") {
  const ClassicalCatMap a;
  const Eigen::Matrix2d m = (Eigen::Matrix2d() << 2, 1, 3, 2).finished();
  CHECK((m * a.unstable_dir() - std::exp(a.lambda()) * a.unstable_dir()).norm() <= 1e-12);
  CHECK((m * a.stable_dir() - std::exp(-a.lambda()) * a.stable_dir()).norm() <= 1e-12);
  CHECK(a.quantizable());
  CHECK_FALSE(ClassicalCatMap(2, 1, 1, 1).quantizable());
  CHECK_THROWS_AS(quantize_cat(ClassicalCatMap(2, 1, 1, 1), 16), Error);
  CHECK_THROWS_AS(quantize_cat(ClassicalCatMap(3, 2, 4, 3), 16), Error);
  CHECK_THROWS_AS(quantize_cat(ClassicalCatMap(3, 2, 4, 3), 15), Error);
}

TEST_CASE("propagator is unitary and intertwines translations") {
  const ClassicalCatMap a;
  for (Index n : {64, 128, 256}) {
    const auto u = quantize_cat(a, n);
    const Matrix& um = u.dense_payload();
    CHECK(unitarity_defect(um) <= 1e-10);
    for (std::int64_t v1 = -3; v1 <= 3; ++v1) {
      for (std::int64_t v2 = -3; v2 <= 3; ++v2) {
        if (v1 * v1 + v2 * v2 > 9) continue;
        const Matrix lhs = um * weyl_translation(n, {v1, v2}).dense_payload() * um.adjoint();
        const Matrix rhs = weyl_translation(n, a.apply({v1, v2})).dense_payload();
        // μ from the largest entry of the right side
        Index r, c;
        rhs.cwiseAbs().maxCoeff(&r, &c);
        const cplx mu = lhs(r, c) / rhs(r, c);
        CHECK(std::abs(std::abs(mu) - 1.0) <= 1e-8);
        CHECK((lhs - mu * rhs).norm() <= 1e-8 * std::sqrt(double(n)));
      }
    }
  }
}

TEST_CASE("N = 2 propagator by hand") {
  const Matrix u = quantize_cat(ClassicalCatMap(), 2).dense_payload();
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(u(0, 0) - cplx(s)) <= 1e-14);
  CHECK(std::abs(u(0, 1) + cplx(s)) <= 1e-14);
  CHECK(std::abs(u(1, 0) + cplx(s)) <= 1e-14);
  CHECK(std::abs(u(1, 1) + cplx(s)) <= 1e-14);
}

TEST_CASE("propagator maps coherent states along the classical map") {
  const Index n = 256;
  const auto u = quantize_cat(ClassicalCatMap(), n);
  const auto phi = coherent_state(n, {0.1, 0.2});
  const StateVector moved(u.apply(phi.amps));
  const RealMatrix h = husimi(moved, 40);
  Index r, c;
  h.maxCoeff(&r, &c);
  CHECK(torus_dist({double(r) / 40, double(c) / 40}, {0.4, 0.7}) <= 0.03);
}

TEST_CASE("Weyl translations") {
  const Index n = 16;
  CHECK((weyl_translation(n, {0, 0}).dense_payload() - Matrix::Identity(n, n)).norm() == 0.0);
  CounterRng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Lattice v = {std::int64_t(rng.below(33)) - 16, std::int64_t(rng.below(33)) - 16};
    const Lattice w = {std::int64_t(rng.below(33)) - 16, std::int64_t(rng.below(33)) - 16};
    const Matrix prod = weyl_translation(n, v).dense_payload() * weyl_translation(n, w).dense_payload();
    const Matrix sum = weyl_translation(n, {v[0] + w[0], v[1] + w[1]}).dense_payload();
    const cplx phase = prod(0, ((-(v[0] + w[0])) % n + n) % n) / sum(0, ((-(v[0] + w[0])) % n + n) % n);
    CHECK(std::abs(std::abs(phase) - 1.0) <= 1e-12);
    CHECK((prod - phase * sum).norm() <= 1e-10);
    CHECK(unitarity_defect(weyl_translation(n, v).dense_payload()) <= 1e-12);
  }
  const Matrix tn = weyl_translation(n, {n, 0}).dense_payload();
  CHECK((tn - tn(0, 0) * Matrix::Identity(n, n)).norm() <= 1e-12);
}

TEST_CASE("coherent states") {
  const Index n = 128;
  CounterRng rng(4);
  for (int t = 0; t < 5; ++t) {
    const Point c = {rng.uniform(), rng.uniform()};
    const auto s = coherent_state(n, c);
    CHECK(std::abs(s.norm() - 1.0) <= 1e-12);
    const RealMatrix h = husimi(s, 32);
    Index r, col;
    h.maxCoeff(&r, &col);
    CHECK(torus_dist({double(r) / 32, double(col) / 32}, c) <= 2.0 / std::sqrt(double(n)) + 1.0 / 32);
  }
  const Point c1 = {0.2, 0.3}, c2 = {0.6, 0.8};
  const double ov = std::abs(coherent_state(n, c1).amps.dot(coherent_state(n, c2).amps));
  CHECK(ov <= std::exp(-kPi * n * std::pow(torus_dist(c1, c2), 2) / 4) + 1e-6);
}

TEST_CASE("strip partitions") {
  CHECK_THROWS_AS(build_strip_partition(64, {1, 0.05}), Error);
  CHECK_THROWS_AS(build_strip_partition(64, {4, 0.2}), Error);
  const auto p2 = build_strip_partition(64, {2, 0.05});
  CHECK(verify_partition_of_unity(p2) <= 1e-12);

  const Index n = 240;
  const StripPartitionSpec spec{4, 0.03};
  const auto p = build_strip_partition(n, spec);
  CHECK(verify_partition_of_unity(p) <= 1e-12);
  const RealMatrix prof = p.diagonal_profiles();
  for (Index j = 0; j < n; ++j) CHECK(std::abs(prof.row(j).squaredNorm() - 1.0) <= 1e-14);
  for (int k = 0; k < 4; ++k) {
    const Index mid = static_cast<Index>((k + 0.5) / 4 * n);
    const auto e = StateVector::basis(n, mid);
    CHECK(p[k].apply_adjoint(e.amps).norm() == doctest::Approx(1.0).epsilon(1e-14));
    for (int o = 0; o < 4; ++o)
      if (o != k) CHECK(p[o].apply_adjoint(e.amps).norm() == 0.0);
    const Index edge = static_cast<Index>(k * n / 4);
    const auto be = StateVector::basis(n, edge);
    const int prev = (k + 3) % 4;
    CHECK(p[k].apply_adjoint(be.amps).squaredNorm() + p[prev].apply_adjoint(be.amps).squaredNorm() ==
          doctest::Approx(1.0).epsilon(1e-14));
  }
  // support property on a fine grid
  const StripProfile profile(spec);
  for (int i = 0; i < 4000; ++i) {
    const double x = i / 4000.0;
    const auto v = profile.values(x);
    for (int k = 0; k < 4; ++k)
      if (v[k] > 0.0) CHECK(profile.in_support(k, x));
  }
}

TEST_CASE("coarse Jacobian tables") {
  const ClassicalCatMap a;
  const double big = 10 * a.lambda();
  const auto t2 = coarse_jacobian_table(a, {2, 0.05}, big, 1024);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(t2.j1(i, j) == doctest::Approx(std::exp(-a.lambda())));
  CHECK(t2.grid_step() == doctest::Approx(1.0 / 1024));
  CHECK_THROWS_AS(coarse_jacobian_table(a, {2, 0.05}, big, 100), Error);

  const auto t64 = coarse_jacobian_table(a, {64, 0.002}, big, 1024);
  CHECK(t64.j1().maxCoeff() == doctest::Approx(std::exp(-a.lambda())));

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> m(3, 3);
  m << true, false, true, true, true, true, false, true, true;
  const auto t = JacobianTable::from_transitions(m, a.lambda(), big);
  CHECK(t.j1(0, 1) == doctest::Approx(std::exp(-big)));
  const std::vector<int> w = {0, 2, 1, 0};
  CHECK(t.word({0, 2, 1}) == doctest::Approx(t.j1(0, 2) * t.j1(2, 1)).epsilon(1e-15));
  CHECK(t.log_word(w) == doctest::Approx(-3 * a.lambda()));
  CHECK(t.penalized_steps({0, 1, 0, 2, 0}) == 2);
  CHECK(t.log_word({0}) == 0.0);
}

TEST_CASE("Husimi densities") {
  const Index n = 128;
  const int g = 32;
  const auto e = StateVector::basis(n, 64);
  const RealMatrix he = husimi(e, g);
  CHECK(he.sum() * n / (g * g) == doctest::Approx(1.0).epsilon(0.05));
  // all columns peak on the row q = 1/2
  for (Index c = 0; c < g; ++c) {
    Index r;
    he.col(c).maxCoeff(&r);
    CHECK(r == g / 2);
  }
  const RealMatrix hc = husimi(coherent_state(n, {0.5, 0.5}), g);
  Index r, c;
  hc.maxCoeff(&r, &c);
  CHECK(r == g / 2);
  CHECK(c == g / 2);
  CHECK(husimi_disc_mass(hc, n, {0.5, 0.5}, 0.2) >= 0.9);
  const RealMatrix hu = husimi(StateVector::normalized(Vector::Ones(n)), g);
  for (Index row = 0; row < g; ++row) {
    Index col;
    hu.row(row).maxCoeff(&col);
    CHECK(col == 0);
  }
}

TEST_CASE("one step preserves Lebesgue strip frequencies") {
  const ClassicalCatMap a;
  CounterRng rng(99);
  const int k = 5;
  const int samples = 1000000;
  std::vector<double> before(k, 0), after(k, 0);
  for (int s = 0; s < samples; ++s) {
    const Point rho = {rng.uniform(), rng.uniform()};
    const Point img = classical_step(a, rho);
    before[std::min(k - 1, int(rho[0] * k))] += 1;
    after[std::min(k - 1, int(img[0] * k))] += 1;
  }
  const double sigma = std::sqrt(samples * (1.0 / k) * (1 - 1.0 / k));
  for (int i = 0; i < k; ++i) CHECK(std::abs(before[i] - after[i]) <= 3 * sigma * std::sqrt(2.0));
}

TEST_CASE("translation Egorov defect without dense products") {
  const ClassicalCatMap a;
  for (Index n : {64, 130}) {
    const Matrix um = quantize_cat(a, n).dense_payload();
    for (const Lattice v : {Lattice{1, 0}, Lattice{0, 1}, Lattice{-2, 3}}) {
      const auto d = translation_egorov_defect(um, a, v);
      CHECK(d.defect <= 1e-10);
      CHECK(std::abs(std::abs(d.phase) - 1.0) <= 1e-12);
      const Matrix lhs = um * weyl_translation(n, v).dense_payload();
      const Matrix rhs = weyl_translation(n, a.apply(v)).dense_payload() * um;
      CHECK((lhs - d.phase * rhs).norm() <= 1e-9);
    }
  }
  // a different map breaks the identity
  const Matrix um = quantize_cat(a, 64).dense_payload();
  CHECK(translation_egorov_defect(um, ClassicalCatMap(2, 3, 1, 2), {1, 0}).defect > 0.5);
}
