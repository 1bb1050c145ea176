#include "eigenscope/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "eigenscope/catmap.hpp"
#include "eigenscope/io.hpp"
#include "eigenscope/refine.hpp"

namespace eigenscope {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "eup-random-sweep", "mu-dft",         "spectrum", "entropy-histogram",
      "pressure-certificate", "subadditivity", "shift-invariance", "norm-decay",
      "egorov-scan",      "scar",           "classical-entropy", "husimi"};
  return names;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "N",     "K",     "n",       "n_o",  "m",     "T",     "G",
      "delta_prime", "gamma", "eta",   "Lambda",  "theta", "seed", "out_dir", "count",
      "measure",    "q0",    "p0",    "state",   "resolution"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  std::istringstream in(value);
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "experiment") experiment = value;
  else if (key == "N") N = parse_number<std::int64_t>(key, value);
  else if (key == "K") K = parse_number<int>(key, value);
  else if (key == "n") n = parse_number<int>(key, value);
  else if (key == "n_o") n_o = parse_number<int>(key, value);
  else if (key == "m") m = parse_number<int>(key, value);
  else if (key == "T") T = parse_number<int>(key, value);
  else if (key == "G") G = parse_number<int>(key, value);
  else if (key == "delta_prime") delta_prime = parse_number<double>(key, value);
  else if (key == "gamma") gamma = parse_number<double>(key, value);
  else if (key == "eta") eta = parse_number<double>(key, value);
  else if (key == "Lambda") Lambda = parse_number<double>(key, value);
  else if (key == "theta") {
    if (value == "auto" || value.empty()) theta.reset();
    else theta = parse_number<double>(key, value);
  }
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out_dir") out_dir = value;
  else if (key == "count") count = parse_number<int>(key, value);
  else if (key == "measure") measure = value;
  else if (key == "q0") q0 = parse_number<double>(key, value);
  else if (key == "p0") p0 = parse_number<double>(key, value);
  else if (key == "state") state = parse_number<int>(key, value);
  else if (key == "resolution") resolution = parse_number<int>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::resolve() {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end()) {
    throw ConfigError(experiment.empty() ? std::string("no experiment given")
                                         : "unknown experiment '" + experiment + "'");
  }
  const bool classical = experiment == "classical-entropy";
  const bool big = experiment == "egorov-scan" || experiment == "scar" ||
                   experiment == "subadditivity" || experiment == "norm-decay";
  if (N < 0) N = experiment == "mu-dft" ? 8 : big ? 512 : 256;
  if (K < 0) K = classical ? 8 : experiment == "norm-decay" ? 4 : 3;
  if (n_o < 0) n_o = classical ? 8 : 1;
  if (m < 0) m = 1;
  if (T < 0) T = 0;
  if (G < 0) G = 64;
  if (delta_prime < 0) delta_prime = experiment == "norm-decay" ? 0.2 : 0.0;
  if (gamma < 0) gamma = 0.0;
  if (eta < 0) eta = 0.02;
  if (Lambda < 0) Lambda = 0.0;
  if (count < 0) {
    if (experiment == "eup-random-sweep") count = 200;
    else if (experiment == "subadditivity") count = 20;
    else if (experiment == "shift-invariance") count = 10;
    else count = 0;
  }
  if (measure.empty()) measure = "lebesgue";
  if (q0 < 0) q0 = 0.5;
  if (p0 < 0) p0 = 0.5;
  if (state < -1) state = 0;
  if (resolution < 0) resolution = 1024;
  if (N < 2) throw ConfigError("N must be at least 2");
  if (K < 1) throw ConfigError("K must be positive");
  if (G < 1) throw ConfigError("G must be positive");
  if (!(delta_prime >= 0.0 && delta_prime < 1.0)) throw ConfigError("delta_prime must lie in [0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  const int n_e = ehrenfest_time(Index(N), delta_prime, ClassicalCatMap().lambda());
  if (n < 0) n = experiment == "shift-invariance" ? 2 : n_e;
  if (T <= 0 && experiment == "egorov-scan") T = 2 * n_e;
  if (T <= 0 && experiment == "scar") T = 2 * std::max(n, 1);
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["N"] = N;
  j["K"] = K;
  j["n"] = n;
  j["n_o"] = n_o;
  j["m"] = m;
  j["T"] = T;
  j["G"] = G;
  j["delta_prime"] = delta_prime;
  j["gamma"] = gamma;
  j["eta"] = eta;
  j["Lambda"] = Lambda;
  j["theta"] = theta ? json(*theta) : json(nullptr);
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["count"] = count;
  j["measure"] = measure;
  j["q0"] = q0;
  j["p0"] = p0;
  j["state"] = state;
  j["resolution"] = resolution;
  return j;
}

// ---------------------------------------------------------------- random instances

Matrix haar_unitary(Index n, CounterRng& rng) {
  Matrix g(n, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) g(r, c) = rng.complex_normal() / std::sqrt(2.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index c = 0; c < n; ++c) {
    const cplx d = rr(c, c);
    if (std::abs(d) > 0.0) q.col(c) *= d / std::abs(d);
  }
  return q;
}

EupInstance random_eup_instance(std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, index);
  EupInstance in;
  in.N = 2 + Index(rng.below(63));
  in.K = 2 + int(rng.below(7));
  in.U = haar_unitary(in.N, rng);
  const Matrix v = haar_unitary(in.N, rng);
  RealMatrix w(in.N, in.K);
  for (Index j = 0; j < in.N; ++j) {
    for (int k = 0; k < in.K; ++k) w(j, k) = rng.uniform(0.0, 1.0);
    w.row(j) /= w.row(j).norm();
  }
  std::vector<OperatorHandle> ops;
  for (int k = 0; k < in.K; ++k) {
    ops.push_back(OperatorHandle::dense(v * w.col(k).cast<cplx>().asDiagonal() * v.adjoint()));
  }
  in.pi = QuantumPartition(ops);
  std::vector<double> a(in.K), b(in.K);
  for (auto& x : a) x = rng.uniform(1.0, 10.0);
  for (auto& x : b) x = rng.uniform(1.0, 10.0);
  in.alpha = WeightFamily(a);
  in.beta = WeightFamily(b);
  Vector x(in.N);
  for (Index j = 0; j < in.N; ++j) x(j) = rng.complex_normal();
  x.normalize();
  in.O = OperatorHandle::dense(Matrix::Identity(in.N, in.N) - x * x.adjoint());
  const auto sd = eig_unitary(OperatorHandle::dense(in.U));
  in.psi = sd.vector(Index(rng.below(std::uint64_t(in.N))));
  for (int k = 0; k < in.K; ++k) {
    const Vector blk = in.pi[k].apply_adjoint(in.psi.amps);
    in.eps = std::max(in.eps, (blk - in.O.apply(blk)).norm());
  }
  return in;
}

// ---------------------------------------------------------------- running

namespace {

json cert_json(const EupCertificate& c) { return json::parse(to_json(c)); }

// Files go to `<name>.partial` first and are renamed once the run succeeds.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
  ~Outputs() {
    if (!committed_) discard();
  }

  std::string stage(const std::string& name) {
    const std::string final_path = (fs::path(dir_) / name).string();
    staged_.push_back(final_path);
    return final_path + ".partial";
  }

  std::vector<std::string> commit() {
    for (const auto& p : staged_) fs::rename(p + ".partial", p);
    committed_ = true;
    return staged_;
  }

  void discard() {
    std::error_code ec;
    for (const auto& p : staged_) fs::remove(p + ".partial", ec);
  }

 private:
  std::string dir_;
  std::vector<std::string> staged_;
  bool committed_ = false;
};

struct Context {
  const ExperimentConfig& cfg;
  Outputs& out;
  json results = json::object();
  std::vector<Check> checks;

  void check_le(const std::string& name, double value, double bound) {
    checks.push_back({name, value, bound, value <= bound});
  }
  void check_ge(const std::string& name, double value, double bound) {
    checks.push_back({name, value, bound, value >= bound});
  }
  std::string file(const std::string& series, const std::string& ext = "csv") {
    return out.stage(cfg.experiment + "." + series + "." + ext);
  }
};

TorusModel model_of(const ExperimentConfig& c) {
  return TorusModel::build(Index(c.N), c.K, c.eta, c.Lambda);
}

int word_length_of(const ExperimentConfig& c, double) { return c.n; }

std::vector<Index> spread_states(Index dim, int count) {
  std::vector<Index> out;
  if (count <= 0 || count >= dim) {
    out.resize(std::size_t(dim));
    std::iota(out.begin(), out.end(), Index(0));
    return out;
  }
  for (int i = 0; i < count; ++i) out.push_back(Index(std::int64_t(i) * dim / count));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void exp_eup_random_sweep(Context& ctx) {
  const int count = ctx.cfg.count;
  std::vector<EupCertificate> certs(static_cast<std::size_t>(count));
  std::vector<std::pair<Index, int>> shapes(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto in = random_eup_instance(ctx.cfg.seed, std::uint64_t(i));
    certs[i] = eup_bound_certificate(OperatorHandle::dense(in.U), in.pi, in.alpha, in.beta, in.O,
                                     in.eps, in.psi);
    shapes[i] = {in.N, in.K};
  }
  std::vector<std::vector<double>> rows;
  double worst = INFINITY;
  for (int i = 0; i < count; ++i) {
    worst = std::min(worst, certs[i].margin);
    rows.push_back({double(i), double(shapes[i].first), double(shapes[i].second), certs[i].eps,
                    certs[i].lhs, certs[i].rhs, certs[i].margin});
  }
  write_series_csv(ctx.file("margins"), {"index", "N", "K", "eps", "lhs", "rhs", "margin"}, rows);
  ctx.results["count"] = count;
  ctx.results["min_margin"] = count ? worst : 0.0;
  ctx.check_ge("min certificate margin", count ? worst : 0.0, -1e-9);
}

void exp_mu_dft(Context& ctx) {
  const Index n = Index(ctx.cfg.N);
  Matrix f(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k)
      f(j, k) = std::polar(1.0 / std::sqrt(double(n)), -kTwoPi * double(j * k) / double(n));
  const auto u = OperatorHandle::dense(f);
  const auto pi = QuantumPartition::basis_projectors(n);
  const auto ones = WeightFamily::uniform(std::size_t(n));
  std::vector<std::vector<double>> rows;
  double worst = 0.0;
  EupCertificate first;
  for (Index j = 0; j < n; ++j) {
    const auto c = eup_bound_certificate(u, pi, ones, ones, OperatorHandle::identity(n), 0.0,
                                         StateVector::basis(n, j));
    if (j == 0) first = c;
    worst = std::max(worst, std::abs(c.margin));
    rows.push_back({double(j), c.p_alpha, c.p_beta, c.lhs, c.rhs, c.margin});
  }
  write_series_csv(ctx.file("states"), {"j", "h_in", "h_out", "lhs", "rhs", "margin"}, rows);
  ctx.results["N"] = n;
  ctx.results["K"] = n;
  ctx.results["n"] = 0;
  ctx.results["h_n"] = first.p_alpha;
  ctx.results["p_alpha"] = first.p_alpha;
  ctx.results["p_beta"] = first.p_beta;
  ctx.results["c"] = first.c_O;
  ctx.results["margin"] = first.margin;
  ctx.results["log_N"] = std::log(double(n));
  ctx.results["certificate"] = cert_json(first);
  ctx.check_le("position states attain the bound", worst, 1e-9);
  ctx.check_le("entropy sum equals log N", std::abs(first.lhs - std::log(double(n))), 1e-9);
}

void exp_spectrum(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const Matrix& u = m.U.dense_payload();
  const auto sd = eig_unitary(m.U);
  double residual = 0.0;
  std::vector<std::vector<double>> rows;
  for (Index k = 0; k < sd.dim(); ++k) {
    const Vector v = sd.eigenvectors.col(k);
    residual = std::max(residual, (u * v - sd.eigenvalues[k] * v).norm());
    rows.push_back({double(k), sd.phase(k), sd.eigenvalues[k].real(), sd.eigenvalues[k].imag()});
  }
  write_series_csv(ctx.file("phases"), {"index", "phase", "re", "im"}, rows);
  write_egsc(ctx.out.stage(ctx.cfg.experiment + ".propagator.egsc"), u);
  double egorov = 0.0;
  for (const Lattice v : {Lattice{1, 0}, Lattice{0, 1}, Lattice{1, 1}, Lattice{2, -1}, Lattice{0, 3}})
    egorov = std::max(egorov, translation_egorov_defect(u, m.map, v).defect);
  std::size_t clusters = 0;
  for (Index k = 0; k < sd.dim(); ++k)
    if (k == 0 || sd.phase(k) - sd.phase(k - 1) > 1e-10) ++clusters;
  const double unit = unitarity_defect(u);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["map"] = m.map.describe();
  ctx.results["unitarity_defect"] = unit;
  ctx.results["eigen_residual"] = residual;
  ctx.results["translation_egorov_defect"] = egorov;
  ctx.results["distinct_phases"] = clusters;
  ctx.check_le("unitarity defect", unit, 1e-10);
  ctx.check_le("eigenvector residual", residual, 1e-8);
  ctx.check_le("translation Egorov defect", egorov, 1e-8);
}

void exp_entropy_histogram(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const int n = word_length_of(ctx.cfg, m.lambda());
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "entropy rates need n >= 1");
  const auto sd = eig_unitary(m.U);
  const auto levels = cylinder_levels(sd.eigenvectors, n, m.U, m.partition);
  const RealMatrix& top = levels[n];
  std::vector<double> rates(std::size_t(sd.dim()));
  for (Index k = 0; k < sd.dim(); ++k) {
    std::vector<double> col(top.col(k).data(), top.col(k).data() + top.rows());
    rates[k] = entropy_of_masses(col) / n;
  }
  constexpr int kBins = 20;
  const double width = m.lambda() / kBins;
  std::vector<double> counts(kBins, 0.0);
  for (double r : rates) counts[std::clamp(int(r / width), 0, kBins - 1)] += 1.0;
  std::vector<std::vector<double>> hist, per;
  for (int b = 0; b < kBins; ++b) hist.push_back({(b + 0.5) * width, counts[b]});
  for (Index k = 0; k < sd.dim(); ++k) per.push_back({double(k), sd.phase(k), rates[k]});
  write_series_csv(ctx.file("histogram"), {"bin", "count"}, hist);
  write_series_csv(ctx.file("rates"), {"index", "phase", "rate"}, per);
  const double lo = *std::min_element(rates.begin(), rates.end());
  const double med = median(rates);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n"] = n;
  ctx.results["lambda"] = m.lambda();
  ctx.results["min_rate"] = lo;
  ctx.results["median_rate"] = med;
  ctx.results["max_rate"] = *std::max_element(rates.begin(), rates.end());
  ctx.results["bin_width"] = width;
  ctx.results["histogram"] = counts;
  ctx.results["rates"] = rates;
  ctx.check_ge("min rate >= lambda/2 - 0.2", lo, m.lambda() / 2 - 0.2);
  ctx.check_ge("median rate >= 0.8 lambda", med, 0.8 * m.lambda());
}

void exp_pressure_certificate(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const int n = word_length_of(ctx.cfg, m.lambda());
  const auto bound = refined_norm_bound(m.U, m.partition, m.jacobian, n);
  const auto sd = eig_unitary(m.U);
  const auto states = spread_states(sd.dim(), ctx.cfg.count);
  std::vector<PressureCertificate> certs(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    certs[i] = pressure_bound_certificate(m, sd.vector(states[i]), n, bound);
  std::size_t worst = 0;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < certs.size(); ++i) {
    if (certs[i].cert.margin < certs[worst].cert.margin) worst = i;
    const auto& c = certs[i].cert;
    rows.push_back({double(states[i]), certs[i].h_n, c.p_alpha, c.p_beta, c.lhs, c.margin});
  }
  write_series_csv(ctx.file("states"), {"index", "h_n", "p_alpha", "p_beta", "lhs", "margin"}, rows);
  const auto& w = certs[worst];
  const double neg2logc = -2.0 * std::log(bound.value);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n"] = n;
  ctx.results["h_n"] = w.h_n;
  ctx.results["p_alpha"] = w.cert.p_alpha;
  ctx.results["p_beta"] = w.cert.p_beta;
  ctx.results["c"] = bound.value;
  ctx.results["margin"] = w.cert.margin;
  ctx.results["worst_state"] = states[worst];
  ctx.results["states"] = states.size();
  ctx.results["minus_2_log_c"] = neg2logc;
  ctx.results["rhs_paper_form"] = w.rhs_paper_form;
  ctx.results["offset_from_paper_form"] = neg2logc - w.rhs_paper_form;
  ctx.results["argmax_in"] = SymbolWord::from_index(bound.arg_in, n + 1, ctx.cfg.K).str();
  ctx.results["argmax_out"] = SymbolWord::from_index(bound.arg_out, n + 1, ctx.cfg.K).str();
  ctx.results["pairs_total"] = bound.pairs_total;
  ctx.results["pairs_evaluated"] = bound.pairs_evaluated;
  ctx.results["max_rank"] = bound.max_rank;
  ctx.results["certificate"] = cert_json(w.cert);
  ctx.check_ge("min certificate margin", w.cert.margin, -1e-9);
  ctx.check_ge("-2 log c - 2 log hbar", neg2logc - w.rhs_paper_form, -20.0);
}

void exp_subadditivity(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const auto cfg = EhrenfestConfig::make(Index(ctx.cfg.N), ctx.cfg.delta_prime, m.lambda());
  const auto sd = eig_unitary(m.U);
  const auto states = spread_states(sd.dim(), ctx.cfg.count);
  std::vector<std::vector<double>> rows;
  double worst = -INFINITY;
  const double R = 3.0 * m.lambda();
  for (Index s : states)
    for (int no = 1; no < cfg.n_E; ++no)
      for (int mm = 1; no + mm <= cfg.n_E; ++mm) {
        const auto r = subadditivity_check(m, sd.vector(s), no, mm, cfg);
        worst = std::max(worst, r.defect);
        rows.push_back({double(s), double(no), double(mm), r.defect});
      }
  write_series_csv(ctx.file("defects"), {"state", "n_o", "m", "defect"}, rows);

  ClassicalMeasureSpec spec;
  spec.resolution = ctx.cfg.resolution;
  std::vector<CylinderMeasure> levels(std::size_t(std::max(cfg.n_E, 1) + 1));
  levels.back() = classical_cylinder_measure(m.map, spec, ctx.cfg.K, int(levels.size()) - 1);
  for (int d = int(levels.size()) - 2; d >= 0; --d) levels[d] = levels[d + 1].marginalize_last();
  double classical = -INFINITY;
  for (int no = 1; no < cfg.n_E; ++no)
    for (int mm = 1; no + mm <= cfg.n_E; ++mm)
      classical = std::max(classical, subadditivity_defect(levels, m.jacobian, no, mm));

  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n_E"] = cfg.n_E;
  ctx.results["R"] = R;
  ctx.results["states"] = states.size();
  ctx.results["pairs"] = rows.size();
  ctx.results["max_defect"] = rows.empty() ? 0.0 : worst;
  ctx.results["classical_max_defect"] = std::isfinite(classical) ? classical : 0.0;
  if (!rows.empty()) ctx.check_le("max defect <= R + 0.1", worst, R + 0.1);
  if (std::isfinite(classical)) ctx.check_le("classical defect <= R", classical, R);
}

void exp_shift_invariance(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const auto sd = eig_unitary(m.U);
  const auto states = spread_states(sd.dim(), ctx.cfg.count);
  std::vector<std::vector<double>> rows;
  double sum = 0.0, worst = 0.0;
  for (Index s : states) {
    const double d = shift_invariance_defect(m, sd.vector(s), ctx.cfg.n, ctx.cfg.n_o, ctx.cfg.gamma);
    sum += d;
    worst = std::max(worst, d);
    rows.push_back({double(s), d});
  }
  write_series_csv(ctx.file("defects"), {"state", "defect"}, rows);
  ClassicalMeasureSpec spec;
  spec.resolution = ctx.cfg.resolution;
  const auto leb = classical_cylinder_measure(m.map, spec, ctx.cfg.K, ctx.cfg.n + ctx.cfg.n_o);
  const double classical = shift_invariance_defect(leb, ctx.cfg.n);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n"] = ctx.cfg.n;
  ctx.results["n_o"] = ctx.cfg.n_o;
  ctx.results["egorov_time"] = egorov_time(Index(ctx.cfg.N), ctx.cfg.gamma, m.lambda());
  ctx.results["mean_defect"] = sum / double(states.size());
  ctx.results["max_defect"] = worst;
  ctx.results["classical_defect"] = classical;
  ctx.check_le("max defect <= 1", worst, 1.0);
  ctx.check_le("classical Lebesgue defect", classical, 1e-12);
}

void exp_norm_decay(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const int n_max = word_length_of(ctx.cfg, m.lambda());
  const auto scan = norm_decay_scan(m.U, m.partition, m.jacobian, n_max);
  std::vector<std::vector<double>> rows;
  json table = json::array();
  double antitone = 0.0, excess = 0.0;
  for (std::size_t i = 0; i < scan.rows.size(); ++i) {
    const auto& r = scan.rows[i];
    rows.push_back({double(r.n), r.max_norm, r.bound});
    table.push_back({{"n", r.n},
                     {"max_norm", r.max_norm},
                     {"bound", r.bound},
                     {"shape", r.shape},
                     {"arg_in", SymbolWord::from_index(r.arg_in, r.n + 1, ctx.cfg.K).str()},
                     {"arg_out", SymbolWord::from_index(r.arg_out, r.n + 1, ctx.cfg.K).str()}});
    excess = std::max(excess, r.max_norm - r.bound);
    if (r.n >= 2) antitone = std::max(antitone, r.max_norm / scan.rows[i - 1].max_norm);
  }
  write_series_csv(ctx.file("scan"), {"n", "value", "bound"}, rows);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n_max"] = n_max;
  ctx.results["C"] = scan.C;
  ctx.results["slope"] = scan.slope;
  ctx.results["rows"] = table;
  ctx.check_le("fitted slope < 0", scan.slope, 0.0);
  ctx.check_le("fitted C <= 100", scan.C, 100.0);
  ctx.check_le("bound dominates", excess, 1e-12);
  if (n_max >= 2) ctx.check_le("antitone after n = 2 (5% slack)", antitone, 1.05);
}

void exp_egorov_scan(Context& ctx) {
  const ClassicalCatMap map;
  const Index n = Index(ctx.cfg.N);
  const int n_e = ehrenfest_time(n, ctx.cfg.delta_prime, map.lambda());
  const int t_max = ctx.cfg.T;
  const int t_half = egorov_time(n, 0.5, map.lambda());
  const auto rows = egorov_commutator_scan(map, n, {1, 0}, {0, 1}, t_max);
  std::vector<std::vector<double>> out;
  json table = json::array();
  double early = 0.0, late = 0.0, mismatch = 0.0;
  for (const auto& r : rows) {
    out.push_back({double(r.t), r.norm, r.closed_form});
    table.push_back({{"t", r.t}, {"norm", r.norm}, {"closed_form", r.closed_form}});
    mismatch = std::max(mismatch, std::abs(r.norm - r.closed_form));
    if (r.t <= t_half) early = std::max(early, r.norm);
    else late = std::max(late, r.norm);
  }
  write_series_csv(ctx.file("scan"), {"t", "norm", "closed_form"}, out);
  ctx.results["N"] = n;
  ctx.results["n_E"] = n_e;
  ctx.results["t_max"] = t_max;
  ctx.results["egorov_time_half"] = t_half;
  ctx.results["max_norm_before"] = early;
  ctx.results["max_norm_after"] = late;
  ctx.results["rows"] = table;
  ctx.check_le("closed form agreement", mismatch, 1e-8);
  ctx.check_le("small before the Egorov time", early, 0.1);
  if (t_max > t_half) ctx.check_ge("breakdown by t_max", late, 0.5);
}

void exp_scar(Context& ctx) {
  const auto m = model_of(ctx.cfg);
  const int n = word_length_of(ctx.cfg, m.lambda());
  const int T = ctx.cfg.T;
  ScarOptions o;
  o.theta = ctx.cfg.theta;
  o.grid = ctx.cfg.G;
  const Point center = {ctx.cfg.q0, ctx.cfg.p0};
  const auto q = scar_quasimode(m.U, Index(ctx.cfg.N), T, center, o);
  const auto mu = cylinder_measure(q.state, n, m.U, m.partition);
  const auto er = entropy_rate(mu, m.jacobian);
  const RealMatrix h = husimi(q.state, ctx.cfg.G);
  write_grid_csv(ctx.file("husimi"), h);
  ctx.results["N"] = ctx.cfg.N;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n"] = n;
  ctx.results["T"] = T;
  ctx.results["center"] = {center[0], center[1]};
  ctx.results["theta"] = q.theta;
  ctx.results["theta_scanned"] = q.theta_scanned;
  ctx.results["defect"] = q.defect;
  ctx.results["disc_mass"] = q.disc_mass;
  ctx.results["entropy_rate"] = er.rate;
  ctx.results["entropy_increment"] = er.increment;
  ctx.results["eigen_residual"] = mu.eigen_residual;
  ctx.results["lambda"] = m.lambda();
  ctx.check_ge("disc mass >= 0.3", q.disc_mass, 0.3);
  ctx.check_le("disc mass <= 0.7", q.disc_mass, 0.7);
  ctx.check_le("entropy rate <= 0.85 lambda", er.rate, 0.85 * m.lambda());
}

void exp_classical_entropy(Context& ctx) {
  const ClassicalCatMap map;
  auto spec = ClassicalMeasureSpec::parse(ctx.cfg.measure);
  const auto mu = classical_cylinder_measure(map, spec, ctx.cfg.K, ctx.cfg.n_o);
  const double Lambda = ctx.cfg.Lambda > 0 ? ctx.cfg.Lambda : 10.0 * map.lambda();
  const auto jac = coarse_jacobian_table(map, {ctx.cfg.K, ctx.cfg.eta}, Lambda);
  const auto r = entropy_rate(mu, jac);
  constexpr std::size_t kCsvWords = 200'000;
  if (mu.size() <= kCsvWords) write_cylinder_csv(ctx.file("cylinders"), mu);
  ctx.results["measure"] = ctx.cfg.measure;
  ctx.results["K"] = ctx.cfg.K;
  ctx.results["n_o"] = ctx.cfg.n_o;
  ctx.results["words"] = mu.size();
  ctx.results["h_n"] = mu.entropy();
  ctx.results["rate"] = r.rate;
  ctx.results["increment"] = r.increment;
  ctx.results["jacobian_average"] = r.jacobian_average;
  ctx.results["ruelle_ok"] = r.ruelle_ok;
  ctx.results["lambda"] = map.lambda();
  ctx.check_le("Ruelle inequality", r.increment, std::abs(r.jacobian_average) + 0.05);
  if (spec.kind == ClassicalMeasureSpec::Kind::Lebesgue) {
    ctx.check_ge("Lebesgue increment >= 0.9 lambda", r.increment, 0.9 * map.lambda());
    ctx.check_le("Lebesgue increment <= lambda + 0.05", r.increment, map.lambda() + 0.05);
  } else {
    ctx.check_le("periodic orbit increment <= 0.05", r.increment, 0.05);
  }
}

void exp_husimi(Context& ctx) {
  const Index n = Index(ctx.cfg.N);
  StateVector psi;
  if (ctx.cfg.state < 0) {
    psi = coherent_state(n, {ctx.cfg.q0, ctx.cfg.p0});
  } else {
    const auto m = model_of(ctx.cfg);
    const auto sd = eig_unitary(m.U);
    if (ctx.cfg.state >= sd.dim()) throw ConfigError("state index out of range");
    psi = sd.vector(ctx.cfg.state);
  }
  const RealMatrix h = husimi(psi, ctx.cfg.G);
  write_grid_csv(ctx.file("grid"), h);
  const double mass = h.sum() * double(n) / double(ctx.cfg.G * ctx.cfg.G);
  Index r = 0, c = 0;
  h.maxCoeff(&r, &c);
  ctx.results["N"] = n;
  ctx.results["G"] = ctx.cfg.G;
  ctx.results["state"] = ctx.cfg.state;
  ctx.results["total_mass"] = mass;
  ctx.results["argmax"] = {double(r) / ctx.cfg.G, double(c) / ctx.cfg.G};
  json grid = json::array();
  for (Index i = 0; i < h.rows(); ++i) {
    std::vector<double> row(std::size_t(h.cols()));
    for (Index j = 0; j < h.cols(); ++j) row[j] = h(i, j);
    grid.push_back(row);
  }
  ctx.results["grid"] = grid;
  ctx.check_le("total Husimi mass", std::abs(mass - 1.0), 1e-3);
}

const std::map<std::string, std::function<void(Context&)>>& registry() {
  static const std::map<std::string, std::function<void(Context&)>> r = {
      {"eup-random-sweep", exp_eup_random_sweep},
      {"mu-dft", exp_mu_dft},
      {"spectrum", exp_spectrum},
      {"entropy-histogram", exp_entropy_histogram},
      {"pressure-certificate", exp_pressure_certificate},
      {"subadditivity", exp_subadditivity},
      {"shift-invariance", exp_shift_invariance},
      {"norm-decay", exp_norm_decay},
      {"egorov-scan", exp_egorov_scan},
      {"scar", exp_scar},
      {"classical-entropy", exp_classical_entropy},
      {"husimi", exp_husimi}};
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << text;
}

}  // namespace

RunOutcome run_experiment(ExperimentConfig config) {
  config.resolve();
  RunOutcome outcome;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw ConfigError("cannot create out_dir '" + config.out_dir + "'");
  Outputs out(config.out_dir);
  Context ctx{config, out, json::object(), {}};
  registry().at(config.experiment)(ctx);

  json report;
  report["manifest"] = {{"tool", "eigenscope"}, {"version", kVersion}, {"config", config.to_json()}};
  report["experiment"] = config.experiment;
  report["results"] = ctx.results;
  json checks = json::array();
  const Check* failed = nullptr;
  for (const auto& c : ctx.checks) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"ok", c.ok}});
    if (!c.ok && !failed) failed = &c;
  }
  report["checks"] = checks;
  report["status"] = failed ? "failed" : "ok";
  write_text(out.stage(config.experiment + ".report.json"), report.dump(2) + "\n");

  outcome.report = report;
  outcome.checks = ctx.checks;
  if (failed) {
    out.discard();
    outcome.exit_code = 2;
    outcome.message = "invariant failed: " + failed->name + " (value " + format_double(failed->value) +
                      ", bound " + format_double(failed->bound) + ")";
    return outcome;
  }
  outcome.files = out.commit();
  outcome.message = config.experiment + ": " + std::to_string(ctx.checks.size()) + " checks passed";
  return outcome;
}

// ---------------------------------------------------------------- plots

std::vector<std::string> emit_plot_data(const std::vector<std::string>& reports) {
  if (reports.empty()) throw ConfigError("no report files given");
  std::vector<json> parsed;
  for (const auto& p : reports) {
    std::ifstream f(p);
    if (!f) throw ConfigError("cannot read report '" + p + "'");
    try {
      parsed.push_back(json::parse(f));
    } catch (const json::exception& e) {
      throw ConfigError("report '" + p + "' does not parse: " + e.what());
    }
    if (!parsed.back().contains("experiment") || !parsed.back().contains("results")) {
      throw ConfigError("'" + p + "' is not an eigenscope report");
    }
  }
  std::vector<std::string> written;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& rep = parsed[i];
    const std::string exp = rep["experiment"];
    const json& res = rep["results"];
    const fs::path dir = fs::path(reports[i]).parent_path();
    const auto target = [&](const std::string& series) {
      return (dir / (exp + "." + series + ".csv")).string();
    };
    std::vector<std::vector<double>> rows;
    if (exp == "entropy-histogram") {
      const double w = res["bin_width"];
      const auto counts = res["histogram"].get<std::vector<double>>();
      for (std::size_t b = 0; b < counts.size(); ++b) rows.push_back({(double(b) + 0.5) * w, counts[b]});
      written.push_back(target("histogram"));
      write_series_csv(written.back(), {"bin", "count"}, rows);
    } else if (exp == "norm-decay") {
      for (const auto& r : res["rows"])
        rows.push_back({r["n"].get<double>(), std::log(r["max_norm"].get<double>()),
                        std::log(r["bound"].get<double>())});
      written.push_back(target("plot"));
      write_series_csv(written.back(), {"n", "lognorm", "logbound"}, rows);
    } else if (exp == "egorov-scan") {
      for (const auto& r : res["rows"]) rows.push_back({r["t"].get<double>(), r["norm"].get<double>()});
      written.push_back(target("plot"));
      write_series_csv(written.back(), {"t", "norm"}, rows);
    } else if (exp == "husimi") {
      const auto g = res["grid"].get<std::vector<std::vector<double>>>();
      RealMatrix h(Index(g.size()), g.empty() ? 0 : Index(g[0].size()));
      for (Index r = 0; r < h.rows(); ++r)
        for (Index c = 0; c < h.cols(); ++c) h(r, c) = g[r][c];
      written.push_back(target("grid"));
      write_grid_csv(written.back(), h);
    }
  }
  return written;
}

}  // namespace eigenscope
