#include <array>
#include <map>
#include <optional>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eigenscope/catmap.hpp"
#include "eigenscope/eup.hpp"
#include "eigenscope/experiments.hpp"
#include "eigenscope/parallel.hpp"
#include "eigenscope/refine.hpp"

namespace py = pybind11;
using namespace eigenscope;

namespace {

QuantumPartition partition_of(const std::vector<Matrix>& ops) {
  std::vector<OperatorHandle> h;
  for (const auto& m : ops) h.push_back(OperatorHandle::dense(m));
  return QuantumPartition(h);
}

py::dict cert_dict(const EupCertificate& c) {
  py::dict d;
  d["c_O"] = c.c_O;
  d["A"] = c.A;
  d["B"] = c.B;
  d["eps"] = c.eps;
  d["n_terms"] = c.n_terms;
  d["p_alpha"] = c.p_alpha;
  d["p_beta"] = c.p_beta;
  d["lhs"] = c.lhs;
  d["rhs"] = c.rhs;
  d["margin"] = c.margin;
  return d;
}

ClassicalCatMap map_of(const std::array<std::int64_t, 4>& a) {
  return ClassicalCatMap(a[0], a[1], a[2], a[3]);
}

constexpr std::array<std::int64_t, 4> kDefaultMap = {2, 1, 3, 2};

}  // namespace

PYBIND11_MODULE(_eigenscope, m) {
  m.doc() = "eigenscope core bindings";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("set_threads", [](std::size_t n) { set_thread_count(n); }, py::arg("n"));
  m.def("lyapunov", &lyapunov, py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"));
  m.def("ehrenfest_time", &ehrenfest_time, py::arg("N"), py::arg("delta_prime"), py::arg("lam"));
  m.def("egorov_time", &egorov_time, py::arg("N"), py::arg("gamma"), py::arg("lam"));

  m.def("cat_propagator",
        [](Index n, std::array<std::int64_t, 4> a) { return quantize_cat(map_of(a), n).dense_payload(); },
        py::arg("N"), py::arg("A") = kDefaultMap);

  m.def("eig_unitary",
        [](const Matrix& u) {
          const auto sd = eig_unitary(OperatorHandle::dense(u));
          return py::make_tuple(sd.eigenvalues, sd.eigenvectors);
        },
        py::arg("U"));

  m.def("shannon_entropy",
        [](const Vector& psi, const std::vector<Matrix>& pi) {
          return shannon_entropy(StateVector::normalized(psi), partition_of(pi));
        },
        py::arg("psi"), py::arg("partition"));

  m.def("eup_certificate",
        [](const Matrix& u, const std::vector<Matrix>& pi, const std::vector<double>& alpha,
           const std::vector<double>& beta, const std::optional<Matrix>& o, double eps,
           const Vector& psi) {
          const Index n = u.cols();
          const auto oh = o ? OperatorHandle::dense(*o) : OperatorHandle::identity(n);
          return cert_dict(eup_bound_certificate(OperatorHandle::dense(u), partition_of(pi),
                                                 WeightFamily(alpha), WeightFamily(beta), oh, eps,
                                                 StateVector::normalized(psi)));
        },
        py::arg("U"), py::arg("partition"), py::arg("alpha"), py::arg("beta"),
        py::arg("O") = py::none(), py::arg("eps") = 0.0, py::arg("psi"));

  m.def("cylinder_measure",
        [](const Vector& psi, int n, Index N, int K, double eta) {
          const auto model = TorusModel::build(N, K, eta);
          const auto mu = cylinder_measure(StateVector::normalized(psi), n, model.U, model.partition);
          const auto pr = entropy_pressure(mu, model.jacobian);
          py::dict d;
          d["words"] = mu.words();
          d["masses"] = mu.masses();
          d["h_n"] = pr.h_n;
          d["p_alpha"] = pr.p_alpha;
          d["p_beta"] = pr.p_beta;
          return d;
        },
        py::arg("psi"), py::arg("n"), py::arg("N"), py::arg("K") = 3, py::arg("eta") = 0.02);

  m.def("refined_norm_bound",
        [](Index N, int K, int n, bool weighted, double eta) {
          const auto model = TorusModel::build(N, K, eta);
          NormBoundOptions opts;
          opts.weighted = weighted;
          const auto b = refined_norm_bound(model.U, model.partition, model.jacobian, n, opts);
          py::dict d;
          d["n"] = b.n;
          d["value"] = b.value;
          d["max_norm"] = b.max_norm;
          d["arg_in"] = b.arg_in;
          d["arg_out"] = b.arg_out;
          d["pairs_total"] = b.pairs_total;
          d["pairs_evaluated"] = b.pairs_evaluated;
          return d;
        },
        py::arg("N"), py::arg("K"), py::arg("n"), py::arg("weighted") = true,
        py::arg("eta") = 0.02);

  m.def("husimi", [](const Vector& psi, int grid) { return husimi(StateVector::normalized(psi), grid); },
        py::arg("psi"), py::arg("grid") = 64);

  m.def("run_experiment",
        [](const std::map<std::string, std::string>& config) {
          ExperimentConfig c;
          for (const auto& [k, v] : config) c.set(k, v);
          const auto r = run_experiment(c);
          return py::make_tuple(r.exit_code, r.report.dump(), r.files);
        },
        py::arg("config"));
}
