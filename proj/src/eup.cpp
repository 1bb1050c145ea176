#include "eigenscope/eup.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "eigenscope/parallel.hpp"

namespace eigenscope {

namespace {

constexpr double kMassFloor = 1e-300;

void require_count(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(want) + " weights, got " +
                    std::to_string(got));
  }
}

void require_normalized(const Vector& psi, double tol, const char* what) {
  const double norm = psi.norm();
  if (std::abs(norm - 1.0) > tol) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + ": state is not normalized (norm " + std::to_string(norm) +
                    ")",
                norm);
  }
}

double stacked_norm(std::span<const Vector> blocks) {
  double s = 0.0;
  for (const auto& b : blocks) s += b.squaredNorm();
  return std::sqrt(s);
}

std::vector<double> norms_of(std::span<const Vector> blocks) {
  std::vector<double> out(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) out[k] = blocks[k].norm();
  return out;
}

Vector pack(const BlockVector& blocks, Index dim) {
  Vector v(static_cast<Index>(blocks.size()) * dim);
  for (std::size_t k = 0; k < blocks.size(); ++k) v.segment(static_cast<Index>(k) * dim, dim) = blocks[k];
  return v;
}

BlockVector unpack(const Vector& v, std::size_t count, Index dim) {
  BlockVector out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = v.segment(static_cast<Index>(k) * dim, dim);
  return out;
}

// Cone check ‖(I − O) x_k‖ ≤ bound for each block; throws naming the block.
void verify_cone(const OperatorHandle& o, std::span<const Vector> blocks, double bound,
                 const char* what) {
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const double defect = (blocks[k] - o.apply(blocks[k])).norm();
    if (defect > bound + 1e-12) {
      throw Error(ErrorKind::Precondition,
                  std::string(what) + ": block k=" + std::to_string(k) +
                      " violates the cone condition, measured " + std::to_string(defect) +
                      " > " + std::to_string(bound),
                  defect);
    }
  }
}

// max_{j,k} α_k β_j ‖τ_j* U π_k O‖ with upper-bound pruning.
double weighted_pair_max(const std::vector<OperatorHandle>& out_ops,
                         const std::vector<OperatorHandle>& in_ops, const WeightFamily& alpha,
                         const WeightFamily& beta,
                         const std::function<OperatorHandle(std::size_t, std::size_t)>& pair_op) {
  const std::size_t nj = out_ops.size();
  const std::size_t nk = in_ops.size();
  std::vector<double> out_norm(nj), in_norm(nk);
  for (std::size_t j = 0; j < nj; ++j) out_norm[j] = operator_norm(out_ops[j]);
  for (std::size_t k = 0; k < nk; ++k) in_norm[k] = operator_norm(in_ops[k]);

  struct Pair {
    std::size_t j, k;
    double bound;
  };
  std::vector<Pair> pairs;
  pairs.reserve(nj * nk);
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t k = 0; k < nk; ++k) {
      const double b = alpha[k] * beta[j] * out_norm[j] * in_norm[k];
      if (b > 0.0) pairs.push_back({j, k, b});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.bound > b.bound; });

  std::vector<double> values(pairs.size(), 0.0);
  std::atomic<double> best{0.0};
  parallel_for(pairs.size(), [&](std::size_t i) {
    const Pair& p = pairs[i];
    if (p.bound <= best.load()) return;
    const double v = alpha[p.k] * beta[p.j] * operator_norm(pair_op(p.j, p.k));
    values[i] = v;
    double cur = best.load();
    while (v > cur && !best.compare_exchange_weak(cur, v)) {
    }
  });
  double result = 0.0;
  for (double v : values) result = std::max(result, v);
  return result;
}

}  // namespace

WeightFamily::WeightFamily(std::vector<double> weights) : weights_(std::move(weights)) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (!(weights_[k] > 0.0) || !std::isfinite(weights_[k])) {
      throw Error(ErrorKind::InvalidArgument,
                  "weight " + std::to_string(k) + " is not a positive finite number",
                  weights_[k]);
    }
    max_ = std::max(max_, weights_[k]);
  }
}

WeightFamily WeightFamily::uniform(std::size_t count, double value) {
  return WeightFamily(std::vector<double>(count, value));
}

std::vector<double> block_masses(const Vector& psi, const QuantumPartition& pi) {
  if (psi.size() != pi.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "state dimension does not match partition");
  }
  std::vector<double> m(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) m[k] = pi[k].apply_adjoint(psi).squaredNorm();
  return m;
}

double entropy_of_masses(std::span<const double> masses) {
  double h = 0.0;
  for (double m : masses) {
    if (m >= kMassFloor) h -= m * std::log(m);
  }
  return h;
}

double pressure_of_masses(std::span<const double> masses, const WeightFamily& alpha) {
  require_count(alpha.size(), masses.size(), "pressure");
  double p = entropy_of_masses(masses);
  for (std::size_t k = 0; k < masses.size(); ++k) {
    if (masses[k] >= kMassFloor) p -= 2.0 * masses[k] * std::log(alpha[k]);
  }
  return p;
}

double shannon_entropy(const StateVector& psi, const QuantumPartition& pi) {
  require_normalized(psi.amps, 1e-10, "shannon_entropy");
  const auto m = block_masses(psi.amps, pi);
  return entropy_of_masses(m);
}

double pressure(const StateVector& psi, const QuantumPartition& pi, const WeightFamily& alpha) {
  require_normalized(psi.amps, 1e-10, "pressure");
  require_count(alpha.size(), pi.size(), "pressure");
  const auto m = block_masses(psi.amps, pi);
  return pressure_of_masses(m, alpha);
}

double weighted_lp_norm_of_norms(std::span<const double> block_norms, const WeightFamily& alpha,
                                 double p) {
  require_count(alpha.size(), block_norms.size(), "weighted_lp_norm");
  if (!(p >= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "weighted_lp_norm: p must be >= 1", p);
  }
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t k = 0; k < block_norms.size(); ++k) m = std::max(m, alpha[k] * block_norms[k]);
    return m;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < block_norms.size(); ++k) {
    if (block_norms[k] > 0.0) s += std::pow(alpha[k], p - 2.0) * std::pow(block_norms[k], p);
  }
  return std::pow(s, 1.0 / p);
}

double weighted_lp_norm(std::span<const Vector> blocks, const WeightFamily& alpha, double p) {
  const auto n = norms_of(blocks);
  return weighted_lp_norm_of_norms(n, alpha, p);
}

DualityCheck dual_norm_check(std::span<const Vector> lambda, const WeightFamily& alpha,
                             double p) {
  require_count(alpha.size(), lambda.size(), "dual_norm_check");
  if (!(p > 1.0) || std::isinf(p)) {
    throw Error(ErrorKind::InvalidArgument, "dual_norm_check: p must lie in (1, inf)", p);
  }
  const double q = p / (p - 1.0);
  DualityCheck out;
  out.dual_norm = weighted_lp_norm(lambda, alpha, q);

  const auto ln = norms_of(lambda);
  std::vector<double> c(lambda.size());
  out.maximizer.resize(lambda.size());
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    c[k] = ln[k] > 0.0 ? std::pow(alpha[k], q - 2.0) * std::pow(ln[k], q - 1.0) : 0.0;
  }
  const double cn = weighted_lp_norm_of_norms(c, alpha, p);
  cplx pairing = 0.0;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (ln[k] > 0.0 && cn > 0.0) {
      out.maximizer[k] = lambda[k] * (c[k] / (cn * ln[k]));
      pairing += lambda[k].dot(out.maximizer[k]);
    } else {
      out.maximizer[k] = Vector::Zero(lambda[k].size());
    }
  }
  out.sup_value = std::abs(pairing);
  out.gap = std::abs(out.sup_value - out.dual_norm);
  return out;
}

void finalize_certificate(EupCertificate& cert) {
  cert.lhs = cert.p_alpha + cert.p_beta;
  cert.rhs = -2.0 * std::log(cert.c_O + static_cast<double>(cert.n_terms) * cert.A * cert.B *
                                            cert.eps);
  cert.margin = cert.lhs - cert.rhs;
}

std::string to_json(const EupCertificate& cert) {
  nlohmann::ordered_json j;
  j["c_O"] = cert.c_O;
  j["A"] = cert.A;
  j["B"] = cert.B;
  j["eps"] = cert.eps;
  j["n_terms"] = cert.n_terms;
  j["p_alpha"] = cert.p_alpha;
  j["p_beta"] = cert.p_beta;
  j["lhs"] = cert.lhs;
  j["rhs"] = cert.rhs;
  j["margin"] = cert.margin;
  return j.dump();
}

EupCertificate eup_bound_certificate(const OperatorHandle& u, const QuantumPartition& pi,
                                     const WeightFamily& alpha, const WeightFamily& beta,
                                     const OperatorHandle& o, double eps,
                                     const StateVector& psi) {
  auto cert = eup_bound_certificate(u, pi, pi, alpha, beta, o, eps, psi);
  cert.mode = PartitionMode::Single;
  return cert;
}

EupCertificate eup_bound_certificate(const OperatorHandle& u, const QuantumPartition& pi,
                                     const QuantumPartition& tau, const WeightFamily& alpha,
                                     const WeightFamily& beta, const OperatorHandle& o,
                                     double eps, const StateVector& psi) {
  require_count(alpha.size(), pi.size(), "eup_bound_certificate alpha");
  require_count(beta.size(), tau.size(), "eup_bound_certificate beta");
  if (psi.dim() != pi.dim() || u.cols() != pi.dim() || u.rows() != tau.dim() ||
      o.rows() != pi.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "eup_bound_certificate: dimensions disagree");
  }
  if (eps < 0.0) throw Error(ErrorKind::InvalidArgument, "eps must be nonnegative", eps);
  require_normalized(psi.amps, 1e-9, "eup_bound_certificate");
  const Vector upsi = u.apply(psi.amps);
  if (std::abs(upsi.norm() - 1.0) > 1e-9) {
    throw Error(ErrorKind::Precondition, "eup_bound_certificate: U psi is not normalized",
                upsi.norm());
  }

  BlockVector blocks(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) blocks[k] = pi[k].apply_adjoint(psi.amps);
  verify_cone(o, blocks, eps, "eup_bound_certificate");

  std::vector<OperatorHandle> in_ops(pi.size()), out_ops(tau.size());
  for (std::size_t k = 0; k < pi.size(); ++k) in_ops[k] = OperatorHandle::chain({pi[k], o});
  for (std::size_t j = 0; j < tau.size(); ++j) out_ops[j] = tau[j].adjoint();

  EupCertificate cert;
  cert.mode = (&pi == &tau) ? PartitionMode::Single : PartitionMode::Pair;
  cert.c_O = weighted_pair_max(out_ops, in_ops, alpha, beta, [&](std::size_t j, std::size_t k) {
    return OperatorHandle::chain({out_ops[j], u, pi[k], o});
  });
  cert.A = alpha.max();
  cert.B = beta.max();
  cert.eps = eps;
  cert.n_terms = pi.size();

  std::vector<double> m_in(pi.size()), m_out(tau.size());
  for (std::size_t k = 0; k < pi.size(); ++k) m_in[k] = blocks[k].squaredNorm();
  for (std::size_t j = 0; j < tau.size(); ++j) m_out[j] = tau[j].apply_adjoint(upsi).squaredNorm();
  cert.p_alpha = pressure_of_masses(m_in, alpha);
  cert.p_beta = pressure_of_masses(m_out, beta);
  finalize_certificate(cert);
  return cert;
}

BlockOperator::BlockOperator(std::size_t out_blocks, std::size_t in_blocks,
                             std::vector<OperatorHandle> blocks)
    : out_(out_blocks), in_(in_blocks), blocks_(std::move(blocks)) {
  if (blocks_.size() != out_ * in_ || blocks_.empty()) {
    throw Error(ErrorKind::DimensionMismatch, "block operator: grid size mismatch");
  }
  dim_ = blocks_.front().rows();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].rows() != dim_ || blocks_[i].cols() != dim_) {
      throw Error(ErrorKind::DimensionMismatch,
                  "block operator: block " + std::to_string(i) + " has the wrong shape");
    }
  }
}

BlockOperator BlockOperator::from_partitions(const OperatorHandle& u,
                                             const QuantumPartition& pi,
                                             const QuantumPartition& tau) {
  std::vector<OperatorHandle> blocks;
  blocks.reserve(tau.size() * pi.size());
  for (std::size_t j = 0; j < tau.size(); ++j) {
    for (std::size_t k = 0; k < pi.size(); ++k) {
      blocks.push_back(OperatorHandle::chain({tau[j].adjoint(), u, pi[k]}));
    }
  }
  return BlockOperator(tau.size(), pi.size(), std::move(blocks));
}

BlockOperator BlockOperator::scaled(double factor) const {
  std::vector<OperatorHandle> b;
  b.reserve(blocks_.size());
  for (const auto& op : blocks_) b.push_back(op.scaled(factor));
  return BlockOperator(out_, in_, std::move(b));
}

BlockVector BlockOperator::apply(const BlockVector& psi) const {
  if (psi.size() != in_) throw Error(ErrorKind::DimensionMismatch, "block operator: input size");
  BlockVector out(out_, Vector::Zero(dim_));
  for (std::size_t j = 0; j < out_; ++j) {
    for (std::size_t k = 0; k < in_; ++k) out[j] += block(j, k).apply(psi[k]);
  }
  return out;
}

BlockVector BlockOperator::apply_adjoint(const BlockVector& phi) const {
  if (phi.size() != out_) throw Error(ErrorKind::DimensionMismatch, "block operator: input size");
  BlockVector out(in_, Vector::Zero(dim_));
  for (std::size_t k = 0; k < in_; ++k) {
    for (std::size_t j = 0; j < out_; ++j) out[k] += block(j, k).apply_adjoint(phi[j]);
  }
  return out;
}

double BlockOperator::norm22(const NormOptions& options) const {
  const auto fwd = [this](const Vector& x) { return pack(apply(unpack(x, in_, dim_)), dim_); };
  const auto bwd = [this](const Vector& y) {
    return pack(apply_adjoint(unpack(y, out_, dim_)), dim_);
  };
  return power_iteration_norm(fwd, bwd, static_cast<Index>(in_) * dim_, options).value;
}

double BlockOperator::c_O(const WeightFamily& alpha, const WeightFamily& beta,
                          const OperatorHandle& o) const {
  require_count(alpha.size(), in_, "c_O alpha");
  require_count(beta.size(), out_, "c_O beta");
  double best = 0.0;
  for (std::size_t j = 0; j < out_; ++j) {
    for (std::size_t k = 0; k < in_; ++k) {
      best = std::max(best,
                      alpha[k] * beta[j] * operator_norm(OperatorHandle::chain({block(j, k), o})));
    }
  }
  return best;
}

InterpolationCheck interpolation_check(const BlockOperator& t_op, const BlockVector& psi,
                                       const WeightFamily& alpha, const WeightFamily& beta,
                                       const OperatorHandle& o, double eps, double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "interpolation_check: t must lie in (0, 1)", t);
  }
  require_count(alpha.size(), t_op.in_blocks(), "interpolation_check alpha");
  require_count(beta.size(), t_op.out_blocks(), "interpolation_check beta");
  const double tn = t_op.norm22();
  if (tn > 1.0 + 1e-8) {
    throw Error(ErrorKind::Precondition,
                "interpolation_check: block operator norm " + std::to_string(tn) + " exceeds 1",
                tn);
  }
  verify_cone(o, psi, eps * stacked_norm(psi), "interpolation_check");

  const auto image = t_op.apply(psi);
  const double c = t_op.c_O(alpha, beta, o);
  const double k_in = static_cast<double>(t_op.in_blocks());
  InterpolationCheck out;
  out.lhs = weighted_lp_norm(image, beta, 2.0 / (1.0 - t));
  out.rhs = std::pow(c + k_in * alpha.max() * beta.max() * eps, t) *
            weighted_lp_norm(psi, alpha, 2.0 / (1.0 + t));
  out.ok = out.lhs <= out.rhs + 1e-9;
  return out;
}

BlockNormIdentity block_norm_identity_check(const OperatorHandle& u, const QuantumPartition& pi,
                                            const QuantumPartition& tau) {
  for (const auto* part : {&pi, &tau}) {
    const double d = verify_partition_of_unity(*part);
    if (d > 1e-8) {
      throw Error(ErrorKind::Precondition, "block_norm_identity_check: partition defect too large",
                  d);
    }
  }
  BlockNormIdentity out;
  NormOptions opts;
  opts.tolerance = 1e-12;
  out.block_norm = BlockOperator::from_partitions(u, pi, tau).norm22(opts);
  out.operator_norm = operator_norm(u);
  out.gap = std::abs(out.block_norm - out.operator_norm) /
            std::max(out.operator_norm, std::numeric_limits<double>::min());
  return out;
}

}  // namespace eigenscope
