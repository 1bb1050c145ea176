#include "eigenscope/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "eigenscope/rng.hpp"

namespace eigenscope {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::NotUnitary: return "not-unitary";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Budget: return "budget";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

StateVector StateVector::normalized(Vector v) {
  const double n = v.norm();
  if (!(n > 1e-300)) {
    throw Error(ErrorKind::InvalidArgument, "cannot normalize a zero vector", n);
  }
  v /= n;
  return StateVector(std::move(v));
}

StateVector StateVector::basis(Index dim, Index j) {
  if (j < 0 || j >= dim) {
    throw Error(ErrorKind::InvalidArgument, "basis index out of range");
  }
  Vector v = Vector::Zero(dim);
  v(j) = 1.0;
  return StateVector(std::move(v));
}

// ---------------------------------------------------------------------------
// OperatorHandle

OperatorHandle OperatorHandle::dense(Matrix m) {
  OperatorHandle op;
  op.kind_ = Kind::Dense;
  op.dense_ = std::make_shared<const Matrix>(std::move(m));
  return op;
}

OperatorHandle OperatorHandle::diagonal(Vector d) {
  OperatorHandle op;
  op.kind_ = Kind::Diagonal;
  op.diag_ = std::make_shared<const Vector>(std::move(d));
  return op;
}

OperatorHandle OperatorHandle::identity(Index n) {
  return diagonal(Vector::Ones(n));
}

OperatorHandle OperatorHandle::zero(Index n) {
  return diagonal(Vector::Zero(n));
}

OperatorHandle OperatorHandle::chain(std::vector<OperatorHandle> stages) {
  if (stages.empty()) {
    throw Error(ErrorKind::InvalidArgument, "empty operator chain");
  }
  for (std::size_t i = 0; i + 1 < stages.size(); ++i) {
    if (stages[i].cols() != stages[i + 1].rows()) {
      std::ostringstream msg;
      msg << "chain stage " << i << " expects input dimension "
          << stages[i].cols() << " but stage " << i + 1
          << " produces dimension " << stages[i + 1].rows();
      throw Error(ErrorKind::DimensionMismatch, msg.str());
    }
  }
  OperatorHandle op;
  op.kind_ = Kind::Chain;
  op.stages_ =
      std::make_shared<const std::vector<OperatorHandle>>(std::move(stages));
  return op;
}

Index OperatorHandle::rows() const {
  Index r = 0, c = 0;
  switch (kind_) {
    case Kind::Dense: r = dense_->rows(); c = dense_->cols(); break;
    case Kind::Diagonal: r = c = diag_->size(); break;
    case Kind::Chain: r = stages_->front().rows(); c = stages_->back().cols(); break;
  }
  return adjoint_ ? c : r;
}

Index OperatorHandle::cols() const {
  Index r = 0, c = 0;
  switch (kind_) {
    case Kind::Dense: r = dense_->rows(); c = dense_->cols(); break;
    case Kind::Diagonal: r = c = diag_->size(); break;
    case Kind::Chain: r = stages_->front().rows(); c = stages_->back().cols(); break;
  }
  return adjoint_ ? r : c;
}

Index OperatorHandle::dim() const {
  if (rows() != cols()) {
    throw Error(ErrorKind::DimensionMismatch, "operator is not square");
  }
  return rows();
}

namespace {

void check_input(Index expected, Index got) {
  if (expected != got) {
    std::ostringstream msg;
    msg << "operator expects input of dimension " << expected << ", got " << got;
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

}  // namespace

Vector OperatorHandle::apply(const Vector& x) const {
  check_input(cols(), x.size());
  Vector y;
  switch (kind_) {
    case Kind::Dense:
      y = adjoint_ ? Vector(dense_->adjoint() * x) : Vector(*dense_ * x);
      break;
    case Kind::Diagonal:
      y = adjoint_ ? Vector(diag_->conjugate().cwiseProduct(x))
                   : Vector(diag_->cwiseProduct(x));
      break;
    case Kind::Chain:
      y = x;
      if (adjoint_) {
        for (const auto& s : *stages_) y = s.apply_adjoint(y);
      } else {
        for (auto it = stages_->rbegin(); it != stages_->rend(); ++it) {
          y = it->apply(y);
        }
      }
      break;
  }
  if (scale_ != cplx(1.0)) y *= scale_;
  return y;
}

Vector OperatorHandle::apply_adjoint(const Vector& x) const {
  return adjoint().apply(x);
}

Matrix OperatorHandle::apply(const Matrix& x) const {
  check_input(cols(), x.rows());
  Matrix y;
  switch (kind_) {
    case Kind::Dense:
      y = adjoint_ ? Matrix(dense_->adjoint() * x) : Matrix(*dense_ * x);
      break;
    case Kind::Diagonal:
      y = adjoint_ ? Matrix(diag_->conjugate().asDiagonal() * x)
                   : Matrix(diag_->asDiagonal() * x);
      break;
    case Kind::Chain:
      y = x;
      if (adjoint_) {
        for (const auto& s : *stages_) y = s.apply_adjoint(y);
      } else {
        for (auto it = stages_->rbegin(); it != stages_->rend(); ++it) {
          y = it->apply(y);
        }
      }
      break;
  }
  if (scale_ != cplx(1.0)) y *= scale_;
  return y;
}

Matrix OperatorHandle::apply_adjoint(const Matrix& x) const {
  return adjoint().apply(x);
}

OperatorHandle OperatorHandle::adjoint() const {
  OperatorHandle op = *this;
  op.adjoint_ = !adjoint_;
  op.scale_ = std::conj(scale_);
  return op;
}

OperatorHandle OperatorHandle::scaled(cplx factor) const {
  OperatorHandle op = *this;
  op.scale_ *= factor;
  return op;
}

Matrix OperatorHandle::materialize() const {
  Matrix m;
  switch (kind_) {
    case Kind::Dense:
      m = adjoint_ ? Matrix(dense_->adjoint()) : *dense_;
      break;
    case Kind::Diagonal:
      m = adjoint_ ? Matrix(diag_->conjugate().asDiagonal())
                   : Matrix(diag_->asDiagonal());
      break;
    case Kind::Chain: {
      m = stages_->back().materialize();
      for (auto it = std::next(stages_->rbegin()); it != stages_->rend(); ++it) {
        m = it->apply(m);
      }
      if (adjoint_) m = m.adjoint().eval();
      break;
    }
  }
  if (scale_ != cplx(1.0)) m *= scale_;
  return m;
}

const Matrix& OperatorHandle::dense_payload() const {
  if (kind_ != Kind::Dense) {
    throw Error(ErrorKind::InvalidArgument, "operator is not dense");
  }
  return *dense_;
}

Vector OperatorHandle::diagonal_entries() const {
  if (kind_ != Kind::Diagonal) {
    throw Error(ErrorKind::InvalidArgument, "operator is not diagonal");
  }
  Vector d = adjoint_ ? Vector(diag_->conjugate()) : *diag_;
  if (scale_ != cplx(1.0)) d *= scale_;
  return d;
}

const std::vector<OperatorHandle>& OperatorHandle::stages() const {
  if (kind_ != Kind::Chain) {
    throw Error(ErrorKind::InvalidArgument, "operator is not a chain");
  }
  return *stages_;
}

// ---------------------------------------------------------------------------
// Norms

PowerIterationResult power_iteration_norm(
    const std::function<Vector(const Vector&)>& apply,
    const std::function<Vector(const Vector&)>& apply_adjoint, Index cols,
    const NormOptions& options) {
  PowerIterationResult result;
  if (cols <= 0) return result;

  CounterRng rng(options.seed);
  Vector x(cols);
  for (Index i = 0; i < cols; ++i) x(i) = rng.complex_normal();
  x.normalize();

  double previous = -1.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Vector y = apply(x);
    const double rayleigh = y.squaredNorm();  // x*(A*A)x with ‖x‖ = 1
    result.iterations = it;
    result.value = std::sqrt(rayleigh);
    if (rayleigh == 0.0) {
      result.converged = true;
      return result;
    }
    if (previous >= 0.0 &&
        std::abs(rayleigh - previous) <= options.tolerance * rayleigh &&
        it > 2) {
      result.converged = true;
      return result;
    }
    previous = rayleigh;
    Vector z = apply_adjoint(y);
    const double zn = z.norm();
    if (zn == 0.0) {
      result.converged = true;
      return result;
    }
    x = z / zn;
  }
  return result;
}

double operator_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

double operator_norm(const OperatorHandle& a, const NormOptions& options) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "operator of zero dimension");
  }
  switch (a.kind()) {
    case OperatorHandle::Kind::Diagonal:
      return a.diagonal_entries().cwiseAbs().maxCoeff();
    case OperatorHandle::Kind::Dense:
      return operator_norm(a.materialize());
    case OperatorHandle::Kind::Chain: {
      const Index big = std::max(a.rows(), a.cols());
      bool small = big <= options.materialize_limit;
      for (const auto& s : a.stages()) {
        small = small && std::max(s.rows(), s.cols()) <= options.materialize_limit;
      }
      if (small) return operator_norm(a.materialize());
      const auto res = power_iteration_norm(
          [&](const Vector& v) { return a.apply(v); },
          [&](const Vector& v) { return a.apply_adjoint(v); }, a.cols(),
          options);
      return res.value;
    }
  }
  return 0.0;
}

double unitarity_defect(const Matrix& u) {
  if (u.rows() != u.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "unitarity check needs a square matrix");
  }
  Matrix h = u * u.adjoint();
  h.diagonal().array() -= 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Unitary spectral decomposition

double SpectralDecomposition::phase(Index i) const {
  double ph = std::arg(eigenvalues[static_cast<std::size_t>(i)]);
  if (ph < 0.0) ph += kTwoPi;
  if (ph >= kTwoPi) ph -= kTwoPi;
  return ph;
}

namespace {

void fix_phase(Eigen::Ref<Vector> v) {
  const double vmax = v.cwiseAbs().maxCoeff();
  if (vmax == 0.0) return;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= 0.5 * vmax) {
      v *= std::conj(v(i)) / std::abs(v(i));
      return;
    }
  }
}

// Canonical orthonormal basis of span(cluster) from projected unit vectors.
Matrix canonical_cluster_basis(const Matrix& cluster) {
  const Index n = cluster.rows();
  const Index m = cluster.cols();
  Matrix basis(n, m);
  Index found = 0;
  for (Index i = 0; i < n && found < m; ++i) {
    Vector w = cluster * cluster.row(i).adjoint();
    for (int pass = 0; pass < 2; ++pass) {
      for (Index k = 0; k < found; ++k) {
        w -= basis.col(k) * basis.col(k).dot(w);
      }
    }
    const double nrm = w.norm();
    if (nrm > 1e-3) basis.col(found++) = w / nrm;
  }
  if (found < m) {
    // Unreachable in exact arithmetic; fall back to the solver's basis.
    Eigen::HouseholderQR<Matrix> qr(cluster);
    return qr.householderQ() * Matrix::Identity(n, m);
  }
  return basis;
}

}  // namespace

SpectralDecomposition eig_unitary(const OperatorHandle& u, double cluster_gap) {
  const Matrix mat = u.materialize();
  if (mat.rows() != mat.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "eig_unitary needs a square matrix");
  }
  const Index n = mat.rows();
  if (n > 4096) {
    throw Error(ErrorKind::Budget, "eig_unitary supports N <= 4096",
                static_cast<double>(n));
  }
  {
    Matrix h = mat * mat.adjoint();
    h.diagonal().array() -= 1.0;
    const double frob = h.norm();
    if (frob > 1e-8) {
      const double defect = unitarity_defect(mat);
      if (defect > 1e-8) {
        throw Error(ErrorKind::NotUnitary,
                    "matrix is not unitary: ||U U* - I|| = " + std::to_string(defect),
                    defect);
      }
    }
  }

  Eigen::ComplexSchur<Matrix> schur(mat);
  const Matrix& t = schur.matrixT();
  const Matrix& q = schur.matrixU();

  std::vector<double> key(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double ph = std::arg(t(i, i));
    if (ph < 0.0) ph += kTwoPi;
    if (ph >= kTwoPi - 0.5 * cluster_gap) ph -= kTwoPi;  // wrap onto the 0 cluster
    key[static_cast<std::size_t>(i)] = ph;
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
  });

  SpectralDecomposition out;
  out.eigenvalues.resize(static_cast<std::size_t>(n));
  out.eigenvectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    out.eigenvalues[static_cast<std::size_t>(i)] = t(src, src);
    out.eigenvectors.col(i) = q.col(src);
  }

  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && key[static_cast<std::size_t>(order[static_cast<std::size_t>(end)])] -
                              key[static_cast<std::size_t>(order[static_cast<std::size_t>(end - 1)])] <
                          cluster_gap) {
      ++end;
    }
    if (end - start > 1) {
      out.eigenvectors.middleCols(start, end - start) =
          canonical_cluster_basis(out.eigenvectors.middleCols(start, end - start));
    }
    start = end;
  }
  for (Index i = 0; i < n; ++i) fix_phase(out.eigenvectors.col(i));
  return out;
}

// ---------------------------------------------------------------------------
// Partitions

QuantumPartition::QuantumPartition(std::vector<OperatorHandle> elements)
    : elements_(std::move(elements)) {
  if (!elements_.empty()) {
    dim_ = elements_.front().dim();
    for (std::size_t k = 1; k < elements_.size(); ++k) {
      if (elements_[k].dim() != dim_) {
        std::ostringstream msg;
        msg << "partition element " << k << " has dimension "
            << elements_[k].dim() << ", expected " << dim_;
        throw Error(ErrorKind::DimensionMismatch, msg.str());
      }
    }
  }
}

bool QuantumPartition::all_diagonal() const {
  return std::all_of(elements_.begin(), elements_.end(), [](const auto& e) {
    return e.kind() == OperatorHandle::Kind::Diagonal;
  });
}

RealMatrix QuantumPartition::diagonal_profiles() const {
  if (!all_diagonal()) {
    throw Error(ErrorKind::InvalidArgument, "partition is not diagonal");
  }
  RealMatrix out(dim_, static_cast<Index>(elements_.size()));
  for (std::size_t k = 0; k < elements_.size(); ++k) {
    const Vector d = elements_[k].diagonal_entries();
    if (d.imag().cwiseAbs().maxCoeff() > 0.0) {
      throw Error(ErrorKind::InvalidArgument, "partition profile is not real");
    }
    out.col(static_cast<Index>(k)) = d.real();
  }
  return out;
}

QuantumPartition QuantumPartition::basis_projectors(Index dim) {
  std::vector<OperatorHandle> el;
  el.reserve(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) {
    Vector d = Vector::Zero(dim);
    d(j) = 1.0;
    el.push_back(OperatorHandle::diagonal(std::move(d)));
  }
  return QuantumPartition(std::move(el));
}

double verify_partition_of_unity(std::span<const OperatorHandle> family) {
  if (family.empty()) {
    throw Error(ErrorKind::InvalidArgument, "empty partition family");
  }
  const Index n = family.front().dim();
  for (const auto& e : family) {
    if (e.dim() != n) {
      throw Error(ErrorKind::DimensionMismatch, "partition elements differ in dimension");
    }
  }
  const bool diagonal = std::all_of(family.begin(), family.end(), [](const auto& e) {
    return e.kind() == OperatorHandle::Kind::Diagonal;
  });
  if (diagonal) {
    RealVector sum = RealVector::Zero(n);
    for (const auto& e : family) sum += e.diagonal_entries().cwiseAbs2();
    return (sum.array() - 1.0).abs().maxCoeff();
  }
  Matrix s = Matrix::Zero(n, n);
  for (const auto& e : family) {
    const Matrix m = e.materialize();
    s.noalias() += m * m.adjoint();
  }
  s.diagonal().array() -= 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double verify_partition_of_unity(const QuantumPartition& family) {
  return verify_partition_of_unity(std::span<const OperatorHandle>(family.elements()));
}

}  // namespace eigenscope
