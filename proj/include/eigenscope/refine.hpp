#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eigenscope/catmap.hpp"
#include "eigenscope/eup.hpp"
#include "eigenscope/hilbert.hpp"

namespace eigenscope {

/// Letters (ε₀, …, ε_n) over {0..K−1}; n = size() − 1.
struct SymbolWord {
  std::vector<int> letters;
  int K = 2;

  SymbolWord() = default;
  SymbolWord(std::vector<int> l, int alphabet);
  /// Letter 0 varies fastest: index = Σ ε_i K^i.
  static SymbolWord from_index(std::uint64_t index, int length, int alphabet);
  std::uint64_t index() const;
  int n() const { return static_cast<int>(letters.size()) - 1; }
  SymbolWord reversed() const;
  std::string str() const;
};

std::uint64_t word_count(int K, int length);
std::uint64_t reverse_index(std::uint64_t index, int K, int length);

enum class Schedule { Plain, Interleaved };

/// P_ε ψ = P_{ε_n} U ⋯ U P_{ε_0} ψ (Plain) or U^{−n} P_ε ψ (Interleaved), or
/// the adjoints, applied right to left.
Vector refined_apply(const SymbolWord& word, const Vector& psi, const OperatorHandle& u,
                     const QuantumPartition& pi, bool adjoint, Schedule schedule);

/// Probabilities of cylinders [ε₀ … ε_n] stored sparsely, sorted by word index.
///
/// For a state ψ the entry of ε is ‖P_{ε_n} U* P_{ε_{n−1}} ⋯ U* P_{ε_0} Uⁿ ψ‖²,
/// which for an eigenvector equals ‖P_{ε̄}* ψ‖². Words therefore list time
/// backwards: ε_n is the letter at time 0.
class CylinderMeasure {
 public:
  CylinderMeasure() = default;
  CylinderMeasure(int K, int n, std::vector<std::uint64_t> words, std::vector<double> masses);
  /// Dense table over all K^{n+1} words.
  static CylinderMeasure from_dense(int K, int n, const std::vector<double>& masses);

  int K() const { return K_; }
  int n() const { return n_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::uint64_t>& words() const { return words_; }
  const std::vector<double>& masses() const { return masses_; }
  double mass(std::uint64_t index) const;
  double total() const;
  double min_mass() const;

  /// Sum over ε_n: the length-n table.
  CylinderMeasure marginalize_last() const;
  /// Sum over the first `count` letters: the pushforward σ^{count}♯μ.
  CylinderMeasure shift(int count = 1) const;
  double entropy() const;

  bool eigenvector_warning = false;
  double eigen_residual = 0.0;

 private:
  int K_ = 2;
  int n_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<double> masses_;
};

/// Cylinder measure of ψ at length n + 1. Refuses when K^{n+1} > 1e7.
CylinderMeasure cylinder_measure(const StateVector& psi, int n, const OperatorHandle& u,
                                 const QuantumPartition& pi);

/// Cylinder tables at every length 0..n for each column of `eigvecs`
/// (eigenvectors of U), from one tree traversal. Result[d] is a
/// K^{d+1} × M matrix of masses in word-index order.
std::vector<RealMatrix> cylinder_levels(const Matrix& eigvecs, int n, const OperatorHandle& u,
                                        const QuantumPartition& pi);

/// ‖P_ε* ψ‖² for all words of length n + 1, in word-index order.
std::vector<double> refined_masses(const StateVector& psi, int n, const OperatorHandle& u,
                                   const QuantumPartition& pi);

enum class WeightMode { Alpha, Beta, None };

struct PressureReport {
  int n = 0;
  double h_n = 0.0;
  double p_alpha = 0.0;
  double p_beta = 0.0;
  double pressure = 0.0;  // the value selected by the weight mode
  std::vector<std::uint64_t> words;  // masses >= 1e-12
  std::vector<double> masses;
};

/// α_ε = J_n(ε)^{−1/2}, β_ε = J_n(ε)^{−1} with J evaluated on the refined
/// word ε̄ of each cylinder.
PressureReport entropy_pressure(const CylinderMeasure& measure, const JacobianTable& jac,
                                WeightMode mode = WeightMode::Alpha);

/// Weights over refined words of length n + 1 (word-index order).
std::vector<double> make_weights(const JacobianTable& jac, int n, WeightMode mode);

int ehrenfest_time(Index n, double delta_prime, double lambda);
/// floor((1 − γ) log(2πN) / (2λ)).
int egorov_time(Index n, double gamma, double lambda);

struct EhrenfestConfig {
  double delta_prime = 0.0;
  Index N = 0;
  double lambda = 0.0;
  int n_E = 0;
  // recorded for completeness, not used by the torus model
  double delta = 0.0;
  double C_delta = 0.0;

  static EhrenfestConfig make(Index n, double delta_prime, double lambda);
};

/// Quantized map, strip partition and Jacobian table for one N.
struct TorusModel {
  ClassicalCatMap map;
  Index N = 0;
  StripPartitionSpec strips;
  double Lambda = 0.0;
  OperatorHandle U;
  QuantumPartition partition;
  JacobianTable jacobian;

  static TorusModel build(Index n, int K, double eta = 0.02, double Lambda = 0.0,
                          const ClassicalCatMap& map = ClassicalCatMap(), int resolution = 1024);
  double lambda() const { return map.lambda(); }
  int K() const { return strips.K; }
};

struct NormBoundOptions {
  bool weighted = true;  // α_ε β_ε′ weights, otherwise plain norms
  double truncation = 1e-14;
  std::uint64_t max_pairs = 100'000'000ULL;
};

/// max over word pairs of (weights) ‖P_ε′* Uⁿ P_ε‖ through low-rank factors
/// P_ε = A_ε W_ε* and the exact identity ‖P_ε′* Uⁿ P_ε‖ = ‖A_ε′* Uⁿ A_ε‖.
struct NormBound {
  int n = 0;
  double value = 0.0;     // maximum of the (weighted) quantity
  double max_norm = 0.0;  // plain norm at the argmax
  std::uint64_t arg_in = 0;   // ε
  std::uint64_t arg_out = 0;  // ε′
  std::uint64_t pairs_total = 0;
  std::uint64_t pairs_evaluated = 0;
  int max_rank = 0;
};

NormBound refined_norm_bound(const OperatorHandle& u, const QuantumPartition& pi,
                             const JacobianTable& jac, int n, const NormBoundOptions& options = {});

struct PressureCertificate {
  EupCertificate cert;
  double h_n = 0.0;
  double rhs_paper_form = 0.0;  // 2 log ħ = −2 log(2πN)
  NormBound bound;
};

/// EUP applied to the refined partition at length n + 1 with isometry Uⁿ,
/// O = Id and eps = 0. `bound` may carry a precomputed c for this (model, n).
PressureCertificate pressure_bound_certificate(const TorusModel& model, const StateVector& psi,
                                               int n, const std::optional<NormBound>& bound = {});

/// p_{n_o+m,α} − p_{n_o,α} − p_{m−1,α} from cylinder tables of one state,
/// indexed by length (levels[d] has words of length d + 1).
double subadditivity_defect(const std::vector<CylinderMeasure>& levels, const JacobianTable& jac,
                            int n_o, int m);

struct SubadditivityResult {
  double defect = 0.0;
  double R = 0.0;
  bool ok = false;
};

SubadditivityResult subadditivity_check(const TorusModel& model, const StateVector& psi, int n_o,
                                        int m, const EhrenfestConfig& config);

/// max over ε of |σⁿ♯μ([ε]) − μ([ε])| for cylinders of length n_o + 1.
double shift_invariance_defect(const CylinderMeasure& long_measure, int n);
double shift_invariance_defect(const TorusModel& model, const StateVector& psi, int n, int n_o,
                               double gamma);

struct NormDecayRow {
  int n = 0;
  double max_norm = 0.0;
  std::uint64_t arg_in = 0;
  std::uint64_t arg_out = 0;
  double shape = 0.0;  // (2πN) J_n(ε)^{1/2} J_n(ε′) at the argmax
  double bound = 0.0;  // C · shape
};

struct NormDecayScan {
  std::vector<NormDecayRow> rows;
  double C = 0.0;
  double slope = 0.0;  // least squares of log max_norm against n, n >= 1
};

NormDecayScan norm_decay_scan(const OperatorHandle& u, const QuantumPartition& pi,
                              const JacobianTable& jac, int n_max,
                              const NormBoundOptions& options = {});

struct CommutatorRow {
  int t = 0;
  double norm = 0.0;
  double closed_form = 0.0;  // |1 − e^{2πi ω/N}|, ω = (A^{−t}v) ∧ (A^t w)
};

/// ‖[U^{−t} T(v) U^t, U^t T(w) U^{−t}]‖ for t = 0..t_max from dense products.
std::vector<CommutatorRow> egorov_commutator_scan(const ClassicalCatMap& map, Index n,
                                                  const Lattice& v, const Lattice& w, int t_max);

struct ScarQuasimode {
  StateVector state;
  double theta = 0.0;
  int T = 1;
  double defect = 0.0;
  double disc_mass = 0.0;
  bool theta_scanned = false;
  bool centred = true;
};

struct ScarOptions {
  std::optional<double> theta;  // unset: scan the eigenphases
  bool centred = true;          // window t − ⌊T/2⌋
  int grid = 64;
  double radius = 0.1;
};

/// ψ ∝ Σ_{t<T} e^{−iθt} U^{t−s} φ with φ the coherent state at `center` and
/// s = ⌊T/2⌋ (centred) or 0.
ScarQuasimode scar_quasimode(const OperatorHandle& u, Index n, int T, const Point& center,
                             const ScarOptions& options = {});

/// Husimi mass within `radius` of `center` for each column of `states`.
std::vector<double> disc_masses(const Matrix& states, const Point& center, double radius,
                                int grid);

struct ClassicalMeasureSpec {
  enum class Kind { Lebesgue, PeriodicOrbit };
  Kind kind = Kind::Lebesgue;
  int resolution = 4096;   // lattice size for Lebesgue
  Lattice point = {0, 0};  // periodic orbit start: point / denominator
  std::int64_t denominator = 1;

  /// "lebesgue", "lebesgue:<res>", "periodic:<q>,<p>/<den>", "fixed".
  static ClassicalMeasureSpec parse(const std::string& text);
};

/// Cylinder measure of an invariant measure for sharp strips [k/K, (k+1)/K),
/// in the same time-backwards word orientation as the quantum tables.
CylinderMeasure classical_cylinder_measure(const ClassicalCatMap& map,
                                           const ClassicalMeasureSpec& spec, int K, int n);

struct EntropyRate {
  double rate = 0.0;        // h_n / n
  double increment = 0.0;   // h_n − h_{n−1}
  double jacobian_average = 0.0;  // −Σ μ([ε₀ε₁]) log J₁
  bool ruelle_ok = false;   // increment <= |jacobian_average| + 0.05
};

EntropyRate entropy_rate(const CylinderMeasure& measure, const JacobianTable& jac);

}  // namespace eigenscope
