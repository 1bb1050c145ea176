#include <doctest.h>

#include <algorithm>
#include <set>

#include "eigenscope/hilbert.hpp"
#include "helpers.hpp"

using namespace eigenscope;
using namespace testutil;

TEST_CASE("operator_norm on closed-form operators") {
  CHECK(operator_norm(OperatorHandle::identity(5)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(operator_norm(OperatorHandle::zero(5)) == 0.0);
  Vector d(3);
  d << 3.0, 1.0, 0.5;
  CHECK(operator_norm(OperatorHandle::diagonal(d)) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("operator_norm matches the full singular value decomposition") {
  CounterRng rng(11);
  const Matrix a = random_matrix(8, 8, rng);
  Eigen::JacobiSVD<Matrix> svd(a);
  const double oracle = svd.singularValues()(0);
  CHECK(std::abs(operator_norm(OperatorHandle::dense(a)) - oracle) <= 1e-6 * oracle);

  // large chain goes through power iteration
  const Matrix b = random_matrix(300, 300, rng);
  const Matrix c = random_matrix(300, 300, rng);
  const auto chain = OperatorHandle::chain({OperatorHandle::dense(b), OperatorHandle::dense(c)});
  Eigen::BDCSVD<Matrix> svd2(b * c);
  const double big = svd2.singularValues()(0);
  CHECK(std::abs(operator_norm(chain) - big) <= 1e-6 * big);
}

TEST_CASE("operator_norm of adjoint and submultiplicativity") {
  CounterRng rng(12);
  for (Index n : {4, 16, 64}) {
    const auto a = OperatorHandle::dense(random_matrix(n, n, rng));
    const auto b = OperatorHandle::dense(random_matrix(n, n, rng));
    const double na = operator_norm(a);
    CHECK(std::abs(operator_norm(a.adjoint()) - na) <= 1e-6 * na);
    const double nab = operator_norm(OperatorHandle::chain({a, b}));
    CHECK(nab <= na * operator_norm(b) * (1 + 1e-6));
  }
}

TEST_CASE("chain application agrees with materialized product") {
  CounterRng rng(13);
  const auto a = OperatorHandle::dense(random_matrix(6, 6, rng));
  Vector dv = random_vector(6, rng);
  const auto d = OperatorHandle::diagonal(dv);
  const auto b = OperatorHandle::dense(random_matrix(6, 6, rng)).adjoint();
  const auto chain = OperatorHandle::chain({a, d, b});
  const Matrix m = chain.materialize();
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = random_vector(6, rng);
    CHECK((chain.apply(x) - m * x).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((chain.apply_adjoint(x) - m.adjoint() * x).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // associativity
  const auto left = OperatorHandle::chain({OperatorHandle::chain({a, d}), b});
  CHECK((left.materialize() - m).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("chain dimension mismatch names the stages") {
  const auto a = OperatorHandle::identity(3);
  const auto b = OperatorHandle::identity(4);
  try {
    (void)OperatorHandle::chain({a, b});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
    const std::string what = e.what();
    CHECK(what.find("0") != std::string::npos);
    CHECK(what.find("1") != std::string::npos);
  }
}

TEST_CASE("eig_unitary on the identity returns the standard basis") {
  const auto sd = eig_unitary(OperatorHandle::identity(6));
  for (Index i = 0; i < 6; ++i) {
    CHECK(std::abs(sd.eigenvalues[i] - cplx(1.0)) <= 1e-12);
    CHECK((sd.eigenvectors.col(i) - Vector::Unit(6, i)).norm() <= 1e-12);
  }
}

namespace {
void check_decomposition(const Matrix& u, const SpectralDecomposition& sd) {
  const Index n = u.rows();
  double prev = -1.0;
  for (Index i = 0; i < n; ++i) {
    const cplx mu = sd.eigenvalues[i];
    CHECK(std::abs(std::abs(mu) - 1.0) <= 1e-8);
    CHECK((u * sd.eigenvectors.col(i) - mu * sd.eigenvectors.col(i)).norm() <= 1e-8);
    const double ph = sd.phase(i);
    CHECK(ph >= 0.0);
    CHECK(ph < kTwoPi);
    CHECK(ph >= prev - 1e-10);
    prev = ph;
  }
  const Matrix gram = sd.eigenvectors.adjoint() * sd.eigenvectors;
  CHECK((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-8);
}
}  // namespace

TEST_CASE("eig_unitary on the N=4 Fourier matrix") {
  const Matrix f = dft(4);
  const auto sd = eig_unitary(OperatorHandle::dense(f));
  check_decomposition(f, sd);
  const std::vector<cplx> allowed = {1.0, -1.0, cplx(0, 1), cplx(0, -1)};
  for (const auto& mu : sd.eigenvalues) {
    double best = 10;
    for (const auto& a : allowed) best = std::min(best, std::abs(mu - a));
    CHECK(best <= 1e-10);
  }
}

TEST_CASE("eig_unitary on random unitaries, with reconstruction") {
  CounterRng rng(21);
  for (Index n : {5, 32, 128}) {
    const Matrix u = random_unitary(n, rng);
    const auto sd = eig_unitary(OperatorHandle::dense(u));
    check_decomposition(u, sd);
    Matrix rebuilt = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      rebuilt += sd.eigenvalues[i] * sd.eigenvectors.col(i) * sd.eigenvectors.col(i).adjoint();
    CHECK((rebuilt - u).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("eig_unitary is deterministic on degenerate spectra") {
  // diag(1, i, 1, i) conjugated by a permutation keeps exact degeneracy
  Vector d(4);
  d << 1.0, cplx(0, 1), 1.0, cplx(0, 1);
  const Matrix u = d.asDiagonal();
  const auto a = eig_unitary(OperatorHandle::dense(u));
  const auto b = eig_unitary(OperatorHandle::dense(u));
  CHECK(a.eigenvectors == b.eigenvectors);
  check_decomposition(u, a);
  CHECK((a.eigenvectors.col(0) - Vector::Unit(4, 0)).norm() <= 1e-12);
  CHECK((a.eigenvectors.col(1) - Vector::Unit(4, 2)).norm() <= 1e-12);
}

TEST_CASE("eig_unitary rejects non-unitary input with the measured defect") {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 0) = 2.0;
  try {
    (void)eig_unitary(OperatorHandle::dense(m));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotUnitary);
    REQUIRE(e.measured().has_value());
    CHECK(*e.measured() == doctest::Approx(3.0));
  }
}

TEST_CASE("partition of unity defects") {
  CHECK(verify_partition_of_unity(QuantumPartition::basis_projectors(7)) <= 1e-14);
  const auto basis = QuantumPartition::basis_projectors(7);
  std::vector<OperatorHandle> scaled;
  for (const auto& p : basis.elements())
    scaled.push_back(p.scaled(0.9));
  CHECK(verify_partition_of_unity(scaled) == doctest::Approx(0.19).epsilon(1e-12));
  std::vector<OperatorHandle> empty;
  CHECK_THROWS_AS(verify_partition_of_unity(empty), Error);
}

TEST_CASE("partition defect for a dense family") {
  CounterRng rng(5);
  const Matrix u = random_unitary(6, rng);
  // columns of a unitary give rank-one pieces summing to the identity
  std::vector<OperatorHandle> fam;
  for (Index k = 0; k < 6; ++k) fam.push_back(OperatorHandle::dense(u.col(k) * u.col(k).adjoint()));
  CHECK(verify_partition_of_unity(fam) <= 1e-12);
}
