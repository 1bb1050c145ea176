#include <doctest.h>

#include <cmath>

#include "eigenscope/refine.hpp"
#include "helpers.hpp"

using namespace eigenscope;
using namespace testutil;

namespace {

constexpr double kLambda = 1.3169579;

JacobianTable flat_table(int K, double lambda = kLambda) {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> all(K, K);
  all.setConstant(true);
  return JacobianTable::from_transitions(all, lambda, 10 * lambda);
}

const TorusModel& model128() {
  static const TorusModel m = TorusModel::build(128, 3);
  return m;
}

const SpectralDecomposition& spectrum128() {
  static const SpectralDecomposition sd = eig_unitary(model128().U);
  return sd;
}

Matrix dense_refined(const SymbolWord& w, const OperatorHandle& u, const QuantumPartition& pi) {
  const Index n = pi.dim();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j)
    out.col(j) = refined_apply(w, StateVector::basis(n, j).amps, u, pi, false, Schedule::Plain);
  return out;
}

}  // namespace

TEST_CASE("symbol words") {
  const SymbolWord w({2, 0, 1}, 3);
  CHECK(w.n() == 2);
  CHECK(w.index() == 2 + 0 * 3 + 1 * 9);
  CHECK(SymbolWord::from_index(w.index(), 3, 3).letters == w.letters);
  CHECK(w.reversed().letters == std::vector<int>{1, 0, 2});
  CHECK(reverse_index(w.index(), 3, 3) == w.reversed().index());
  CHECK(w.str() == "201");
  CHECK(word_count(3, 4) == 81);
  CHECK_THROWS_AS(SymbolWord({3}, 3), Error);
  CHECK_THROWS_AS(SymbolWord({}, 3), Error);
}

TEST_CASE("refined_apply basics") {
  const auto& m = model128();
  CounterRng rng(11);
  const Vector psi = random_unit(128, rng);
  const Vector a = refined_apply(SymbolWord({1}, 3), psi, m.U, m.partition, false, Schedule::Plain);
  CHECK((a - m.partition[1].apply(psi)).norm() < 1e-14);

  // adjoint pairing ⟨P_ε x, y⟩ = ⟨x, P_ε* y⟩
  const Vector y = random_unit(128, rng);
  const SymbolWord w({0, 2, 1, 1}, 3);
  for (auto s : {Schedule::Plain, Schedule::Interleaved}) {
    const cplx lhs = refined_apply(w, psi, m.U, m.partition, false, s).dot(y);
    const cplx rhs = psi.dot(refined_apply(w, y, m.U, m.partition, true, s));
    CHECK(std::abs(lhs - rhs) < 1e-13);
  }
  CHECK_THROWS_AS(refined_apply(w, Vector::Zero(64), m.U, m.partition, false, Schedule::Plain), Error);
  CHECK_THROWS_AS(refined_apply(SymbolWord({0, 1}, 4), psi, m.U, m.partition, false, Schedule::Plain),
                  Error);
}

TEST_CASE("resolution of identity N=256 K=3 n=4") {
  const auto m = TorusModel::build(256, 3);
  CounterRng rng(5);
  const StateVector psi(random_unit(256, rng));
  const auto masses = refined_masses(psi, 4, m.U, m.partition);
  REQUIRE(masses.size() == 243);
  double total = 0;
  for (double x : masses) total += x;
  CHECK(std::abs(total - 1.0) < 1e-10);
  // tree values agree with direct application
  for (std::uint64_t i : {0ULL, 17ULL, 100ULL, 242ULL}) {
    const auto w = SymbolWord::from_index(i, 5, 3);
    const double direct =
        refined_apply(w, psi.amps, m.U, m.partition, true, Schedule::Plain).squaredNorm();
    CHECK(std::abs(direct - masses[i]) < 1e-13);
  }
}

TEST_CASE("resolution over a grid of N K n") {
  CounterRng rng(6);
  for (Index n : {64, 200}) {
    for (int K : {2, 5}) {
      const auto m = TorusModel::build(n, K);
      const StateVector psi(random_unit(n, rng));
      const auto masses = refined_masses(psi, 4, m.U, m.partition);
      double total = 0;
      for (double x : masses) total += x;
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("eigenvector norm identity for interleaved words") {
  const auto& m = model128();
  const auto& sd = spectrum128();
  CounterRng rng(8);
  const Vector psi = sd.eigenvectors.col(37);
  for (int i = 0; i < 20; ++i) {
    std::vector<int> l(1 + rng.below(6));
    for (int& x : l) x = int(rng.below(3));
    const SymbolWord w(l, 3);
    const double a = refined_apply(w, psi, m.U, m.partition, true, Schedule::Plain).norm();
    const double b = refined_apply(w, psi, m.U, m.partition, true, Schedule::Interleaved).norm();
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("cylinder measure of a basis state under the identity") {
  const auto u = OperatorHandle::identity(5);
  const auto pi = QuantumPartition::basis_projectors(5);
  const auto mu = cylinder_measure(StateVector::basis(5, 3), 2, u, pi);
  CHECK(mu.mass(3 + 3 * 5 + 3 * 25) == doctest::Approx(1.0));
  CHECK(mu.total() == doctest::Approx(1.0));
  CHECK(mu.entropy() == 0.0);
  CHECK_FALSE(mu.eigenvector_warning);
  CHECK(shift_invariance_defect(mu, 1) == 0.0);
}

TEST_CASE("cylinder compatibility and orientation") {
  const auto& m = model128();
  const auto& sd = spectrum128();
  const StateVector psi = sd.vector(5);
  const auto levels = cylinder_levels(sd.eigenvectors.leftCols(8), 5, m.U, m.partition);
  REQUIRE(levels.size() == 6);
  for (int d = 0; d <= 5; ++d) {
    const auto mu = cylinder_measure(psi, d, m.U, m.partition);
    CHECK(std::abs(mu.total() - 1.0) < 1e-9);
    CHECK(mu.min_mass() >= -1e-12);
    CHECK_FALSE(mu.eigenvector_warning);
    double worst = 0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      worst = std::max(worst, std::abs(mu.masses()[i] - levels[d](Index(i), 5)));
    CHECK(worst < 1e-12);
    if (d > 0) {
      const auto lower = mu.marginalize_last();
      const auto direct = cylinder_measure(psi, d - 1, m.U, m.partition);
      double defect = 0;
      for (std::size_t i = 0; i < direct.size(); ++i)
        defect = std::max(defect, std::abs(lower.mass(direct.words()[i]) - direct.masses()[i]));
      CHECK(defect < 1e-10);
    }
  }
  // eigenvector tables are the refined masses read backwards
  const auto mu = cylinder_measure(psi, 4, m.U, m.partition);
  const auto rm = refined_masses(psi, 4, m.U, m.partition);
  double worst = 0;
  for (std::uint64_t i = 0; i < rm.size(); ++i)
    worst = std::max(worst, std::abs(mu.mass(reverse_index(i, 3, 5)) - rm[i]));
  CHECK(worst < 1e-12);
  CHECK(std::abs(mu.entropy() - entropy_of_masses(rm)) < 1e-9);

  CounterRng rng(1);
  const auto warn = cylinder_measure(StateVector(random_unit(128, rng)), 2, m.U, m.partition);
  CHECK(warn.eigenvector_warning);
}

TEST_CASE("cylinder size refusal") {
  const auto m = TorusModel::build(64, 8);
  CHECK_THROWS_AS(cylinder_measure(StateVector::basis(64, 0), 8, m.U, m.partition), Error);
}

TEST_CASE("entropy and pressure closed forms") {
  const auto jac = flat_table(2);
  const CylinderMeasure point(2, 3, {5}, {1.0});
  const auto r = entropy_pressure(point, jac, WeightMode::Alpha);
  CHECK(r.h_n == 0.0);
  CHECK(r.p_alpha == doctest::Approx(-3 * kLambda).epsilon(1e-12));
  CHECK(r.p_beta == doctest::Approx(-6 * kLambda).epsilon(1e-12));
  CHECK(r.pressure == r.p_alpha);
  CHECK(entropy_pressure(point, jac, WeightMode::None).pressure == 0.0);

  const auto uniform = CylinderMeasure::from_dense(3, 4, std::vector<double>(243, 1.0 / 243));
  const auto u = entropy_pressure(uniform, flat_table(3), WeightMode::Beta);
  CHECK(u.h_n == doctest::Approx(5 * std::log(3.0)).epsilon(1e-12));
  CHECK(u.words.size() == 243);

  CHECK_THROWS_AS(entropy_pressure(uniform, jac), Error);
  const CylinderMeasure half(2, 1, {0}, {0.5});
  CHECK_THROWS_AS(entropy_pressure(half, jac), Error);
}

TEST_CASE("entropy range for eigenstates") {
  const auto& m = model128();
  const auto& sd = spectrum128();
  for (Index k = 0; k < 128; k += 9) {
    const auto mu = cylinder_measure(sd.vector(k), 4, m.U, m.partition);
    const auto r = entropy_pressure(mu, m.jacobian);
    CHECK(r.h_n >= 0.0);
    CHECK(r.h_n <= 5 * std::log(3.0) + 1e-9);
  }
}

TEST_CASE("weight bounds at the Ehrenfest time") {
  const auto m = TorusModel::build(512, 3);
  const int n = ehrenfest_time(512, 0.0, m.lambda());
  CHECK(n == 6);
  const double hbar_inv = kTwoPi * 512;
  const auto a = make_weights(m.jacobian, n, WeightMode::Alpha);
  const auto b = make_weights(m.jacobian, n, WeightMode::Beta);
  REQUIRE(a.size() == 2187);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 1.0);
    CHECK(a[i] <= std::sqrt(hbar_inv));
    CHECK(b[i] >= 1.0);
    CHECK(b[i] <= hbar_inv);
  }
}

TEST_CASE("Ehrenfest and Egorov times") {
  CHECK(ehrenfest_time(1024, 0.0, kLambda) == 6);
  CHECK(ehrenfest_time(1024, 0.999999, kLambda) == 0);
  int prev = 0;
  for (Index n = 64; n <= 4096; n *= 2) {
    const int t = ehrenfest_time(n, 0.2, kLambda);
    CHECK(t >= prev);
    prev = t;
  }
  CHECK_THROWS_AS(ehrenfest_time(64, 1.0, kLambda), Error);
  CHECK(egorov_time(512, 0.5, kLambda) == 1);
  CHECK(egorov_time(512, 0.0, kLambda) == 3);
  const auto c = EhrenfestConfig::make(512, 0.0, kLambda);
  CHECK(c.n_E == 6);
}

TEST_CASE("norm engine agrees with dense refined operators") {
  for (int n : {0, 1, 2}) {
    const auto m = TorusModel::build(24, 2, 0.05);
    const Matrix u = m.U.materialize();
    std::vector<Matrix> p;
    const auto W = word_count(2, n + 1);
    for (std::uint64_t i = 0; i < W; ++i)
      p.push_back(dense_refined(SymbolWord::from_index(i, n + 1, 2), m.U, m.partition));
    Matrix un = Matrix::Identity(24, 24);
    for (int t = 0; t < n; ++t) un = u * un;
    const auto alpha = make_weights(m.jacobian, n, WeightMode::Alpha);
    const auto beta = make_weights(m.jacobian, n, WeightMode::Beta);
    double weighted = 0, plain = 0;
    for (std::uint64_t e = 0; e < W; ++e)
      for (std::uint64_t f = 0; f < W; ++f) {
        const double v = operator_norm(Matrix(p[f].adjoint() * un * p[e]));
        plain = std::max(plain, v);
        weighted = std::max(weighted, alpha[e] * beta[f] * v);
      }
    const auto b = refined_norm_bound(m.U, m.partition, m.jacobian, n);
    CHECK(b.value == doctest::Approx(weighted).epsilon(1e-10));
    CHECK(b.pairs_total == W * W);
    NormBoundOptions o;
    o.weighted = false;
    const auto c = refined_norm_bound(m.U, m.partition, m.jacobian, n, o);
    CHECK(c.value == doctest::Approx(plain).epsilon(1e-10));
    CHECK(c.max_norm == c.value);
  }
}

TEST_CASE("norm engine budget") {
  const auto m = TorusModel::build(32, 3);
  NormBoundOptions o;
  o.max_pairs = 100;
  CHECK_THROWS_AS(refined_norm_bound(m.U, m.partition, m.jacobian, 2, o), Error);
}

TEST_CASE("pressure certificates for eigenstates") {
  const auto m = TorusModel::build(64, 3);
  const auto sd = eig_unitary(m.U);
  const int n = ehrenfest_time(64, 0.0, m.lambda());
  const auto bound = refined_norm_bound(m.U, m.partition, m.jacobian, n);
  for (Index k = 0; k < 64; k += 7) {
    const auto pc = pressure_bound_certificate(m, sd.vector(k), n, bound);
    CHECK(pc.cert.margin >= -1e-9);
    CHECK(pc.cert.c_O == bound.value);
    CHECK(pc.rhs_paper_form == doctest::Approx(-2 * std::log(kTwoPi * 64)));
    CHECK(pc.cert.n_terms == word_count(3, n + 1));
  }
  CounterRng rng(2);
  CHECK_THROWS_AS(pressure_bound_certificate(m, StateVector(random_unit(64, rng)), n, bound), Error);
}

TEST_CASE("subadditivity for eigenstates and Lebesgue") {
  const auto& m = model128();
  const auto& sd = spectrum128();
  const auto cfg = EhrenfestConfig::make(128, 0.0, m.lambda());
  REQUIRE(cfg.n_E == 5);
  for (Index k = 0; k < 128; k += 31) {
    for (int no = 1; no < cfg.n_E; ++no)
      for (int mm = 1; no + mm <= cfg.n_E; ++mm) {
        const auto r = subadditivity_check(m, sd.vector(k), no, mm, cfg);
        CHECK(r.R == doctest::Approx(3.9508738).epsilon(1e-6));
        CHECK(r.ok);
      }
  }
  CHECK_THROWS_AS(subadditivity_check(m, sd.vector(0), 3, 3, cfg), Error);

  std::vector<CylinderMeasure> levels(5);
  ClassicalMeasureSpec spec;
  spec.resolution = 512;
  levels[4] = classical_cylinder_measure(m.map, spec, 3, 4);
  for (int d = 3; d >= 0; --d) levels[d] = levels[d + 1].marginalize_last();
  const auto flat = flat_table(3, m.lambda());
  for (int no = 1; no < 4; ++no)
    for (int mm = 1; no + mm <= 4; ++mm)
      CHECK(subadditivity_defect(levels, flat, no, mm) <= 3 * m.lambda());
}

TEST_CASE("shift invariance") {
  const auto& m = model128();
  const auto& sd = spectrum128();
  const double d = shift_invariance_defect(m, sd.vector(3), 2, 1, 0.0);
  CHECK(d >= 0.0);
  CHECK(d < 0.5);
  CHECK_THROWS_AS(shift_invariance_defect(m, sd.vector(3), 4, 3, 0.0), Error);

  ClassicalMeasureSpec spec;
  spec.resolution = 300;
  const auto leb = classical_cylinder_measure(m.map, spec, 3, 3);
  CHECK(shift_invariance_defect(leb, 2) < 1e-15);
}

TEST_CASE("norm decay scan") {
  const auto m = TorusModel::build(128, 4);
  // disjoint strips at n = 0
  const double disjoint = operator_norm(Matrix(m.partition[2].materialize().adjoint() *
                                               m.partition[0].materialize()));
  CHECK(disjoint <= 1e-12);
  const auto scan = norm_decay_scan(m.U, m.partition, m.jacobian, 3);
  REQUIRE(scan.rows.size() == 4);
  CHECK(scan.rows[0].max_norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scan.rows[0].arg_in == scan.rows[0].arg_out);
  CHECK(scan.slope < 0.0);
  for (const auto& r : scan.rows) CHECK(r.max_norm <= r.bound * (1 + 1e-12));
  for (std::size_t i = 2; i < scan.rows.size(); ++i)
    CHECK(scan.rows[i].max_norm <= 1.05 * scan.rows[i - 1].max_norm);
}

TEST_CASE("Egorov commutator scan") {
  const ClassicalCatMap a;
  const auto same = egorov_commutator_scan(a, 64, {1, 2}, {1, 2}, 4);
  CHECK(same[0].norm < 1e-12);
  for (const auto& r : same) CHECK(r.norm == doctest::Approx(r.closed_form).epsilon(1e-9));
  CHECK(same[1].norm > 0.1);
  const auto rows = egorov_commutator_scan(a, 64, {1, 0}, {0, 1}, 6);
  for (const auto& r : rows) CHECK(r.norm == doctest::Approx(r.closed_form).epsilon(1e-9));
  const auto big = egorov_commutator_scan(a, 512, {1, 0}, {0, 1}, 0);
  CHECK(big[0].norm == doctest::Approx(2 * std::sin(kPi / 512)).epsilon(1e-10));
  CHECK(big[0].norm == doctest::Approx(0.01227).epsilon(1e-3));
}

TEST_CASE("scar quasimode") {
  const auto& m = model128();
  ScarOptions o;
  o.theta = 0.3;
  const auto q1 = scar_quasimode(m.U, 128, 1, {0.0, 0.0}, o);
  const Vector phi = coherent_state(128, {0.0, 0.0}).amps;
  CHECK(std::abs(std::abs(q1.state.amps.dot(phi)) - 1.0) < 1e-12);
  CHECK(q1.defect == doctest::Approx((m.U.apply(phi) - std::polar(1.0, 0.3) * phi).norm()));
  CHECK(q1.defect > 0.1);
  CHECK_FALSE(q1.theta_scanned);

  const auto q = scar_quasimode(m.U, 128, 10, {0.5, 0.5});
  CHECK(q.state.is_normalized(1e-12));
  CHECK(q.theta_scanned);
  CHECK(q.defect >= 0.0);
  CHECK(q.defect < q1.defect);
  CHECK(q.disc_mass > 0.0);
  CHECK(q.disc_mass < 1.0);
  CHECK_THROWS_AS(scar_quasimode(m.U, 128, 0, {0.0, 0.0}), Error);
}

TEST_CASE("classical measure specs") {
  CHECK(ClassicalMeasureSpec::parse("lebesgue").resolution == 4096);
  CHECK(ClassicalMeasureSpec::parse("lebesgue:128").resolution == 128);
  const auto p = ClassicalMeasureSpec::parse("periodic:1,0/5");
  CHECK(p.kind == ClassicalMeasureSpec::Kind::PeriodicOrbit);
  CHECK(p.point == Lattice{1, 0});
  CHECK(p.denominator == 5);
  CHECK_THROWS_AS(ClassicalMeasureSpec::parse("gibbs"), Error);
  CHECK_THROWS_AS(ClassicalMeasureSpec::parse("periodic:1/5"), Error);
  CHECK_THROWS_AS(ClassicalMeasureSpec::parse("lebesgue:x"), Error);
}

TEST_CASE("classical entropy rates") {
  const ClassicalCatMap a;
  const auto flat = flat_table(3, a.lambda());
  const auto dirac = classical_cylinder_measure(a, ClassicalMeasureSpec::parse("fixed"), 3, 4);
  CHECK(dirac.size() == 1);
  const auto rd = entropy_rate(dirac, flat);
  CHECK(rd.rate == 0.0);
  CHECK(rd.jacobian_average == doctest::Approx(a.lambda()));
  CHECK(rd.ruelle_ok);

  const auto orbit = classical_cylinder_measure(a, ClassicalMeasureSpec::parse("periodic:1,0/5"), 3, 6);
  CHECK(orbit.total() == doctest::Approx(1.0));
  CHECK(entropy_rate(orbit, flat).rate < 0.5);

  const auto leb = classical_cylinder_measure(a, ClassicalMeasureSpec::parse("lebesgue:729"), 3, 4);
  CHECK(leb.total() == doctest::Approx(1.0));
  CHECK(leb.shift(1).total() == doctest::Approx(1.0));
  const auto r = entropy_rate(leb, flat);
  CHECK(r.increment > 0.75 * a.lambda());
  CHECK(r.increment < a.lambda() + 0.05);
  CHECK(r.ruelle_ok);
  CHECK_THROWS_AS(entropy_rate(leb.marginalize_last().marginalize_last().marginalize_last().marginalize_last(), flat), Error);
}
