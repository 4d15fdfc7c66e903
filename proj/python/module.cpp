#include "hbvm/cli.hpp"
#include "hbvm/missions.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace hbvm;

namespace {

// ModelPtr holds a const model, which pybind11 holders do not accept.
struct Model {
  ModelPtr ptr;
};

Mat stack(const std::vector<Vec>& rows) {
  if (rows.empty()) return Mat(0, 0);
  Mat out(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = rows[i].transpose();
  return out;
}

py::dict report_dict(const NewtonReport& r) {
  py::dict d;
  d["iterations"] = r.iterations;
  d["residual_history"] = r.residual_history;
  d["step_history"] = r.step_history;
  d["condition_estimates"] = r.condition_estimates;
  d["damping_events"] = r.damping_events;
  d["lsq_residual"] = r.lsq_residual;
  d["final_residual"] = r.final_residual;
  d["converged"] = r.converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Energy-conserving HBVM(k,s) integrators and structured Newton solvers for Hamiltonian BVPs.";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", error.ptr());
  py::register_exception<SingularSystemError>(m, "SingularSystemError", error.ptr());

  m.attr("SUN_EARTH_MU") = kSunEarthMu;

  m.def(
      "gauss_legendre_rule",
      [](int k) {
        const QuadratureRule r = gauss_legendre_rule(k);
        return py::make_tuple(r.nodes, r.weights);
      },
      py::arg("k"), "Nodes and weights of the k-point Gauss rule on [0, 1].");
  m.def(
      "build_tableau",
      [](int k, int s) {
        const HbvmTableau t = build_tableau(k, s);
        return py::make_tuple(t.A, t.b, t.c);
      },
      py::arg("k"), py::arg("s"), "Butcher matrix, weights and abscissae of HBVM(k,s).");

  py::class_<Model>(m, "Model")
      .def_property_readonly("dim", [](const Model& mo) { return mo.ptr->dim(); })
      .def_property_readonly("name", [](const Model& mo) { return mo.ptr->name(); })
      .def("energy", [](const Model& mo, const Vec& y) { return mo.ptr->energy(y); })
      .def("gradient", [](const Model& mo, const Vec& y) { return mo.ptr->gradient(y); })
      .def("hessian", [](const Model& mo, const Vec& y) { return mo.ptr->hessian(y); })
      .def("vector_field", [](const Model& mo, const Vec& y) { return mo.ptr->vector_field(y); })
      .def("__repr__", [](const Model& mo) { return "<hbvm.Model " + mo.ptr->name() + ">"; });

  m.def(
      "model", [](const std::string& name, double mu) { return Model{model_by_name(name, mu)}; }, py::arg("name"),
      py::arg("mu") = kSunEarthMu,
      "Model by name: crtbp, crtbp-planar, hill, harmonic, pendulum, quartic, kepler.");
  m.def(
      "crtbp", [](double mu, bool spatial) { return Model{crtbp_model({mu, spatial})}; },
      py::arg("mu") = kSunEarthMu, py::arg("spatial") = true);
  m.def("hill", [] { return Model{hill_model()}; });
  m.def(
      "extended", [](const Model& base) { return Model{std::make_shared<ExtendedControlModel>(base.ptr)}; },
      py::arg("base"), "Pontryagin extension of a base model (state and costate).");

  m.def(
      "integrate",
      [](const Model& mo, const Vec& y0, double h, int steps, int k, int s) {
        return stack(integrate(*mo.ptr, y0, h, steps, make_partition(k, s)));
      },
      py::arg("model"), py::arg("y0"), py::arg("h"), py::arg("steps"), py::arg("k") = 6, py::arg("s") = 2,
      "HBVM(k,s) trajectory; one row per step, steps + 1 rows.");

  py::class_<NewtonOptions>(m, "NewtonOptions")
      .def(py::init<>())
      .def_readwrite("tol", &NewtonOptions::tol)
      .def_readwrite("max_iters", &NewtonOptions::max_iters)
      .def_readwrite("max_halvings", &NewtonOptions::max_halvings)
      .def_readwrite("divergence_limit", &NewtonOptions::divergence_limit)
      .def_property(
          "exact_jacobian", [](const NewtonOptions& o) { return o.jacobian == JacobianMode::Exact; },
          [](NewtonOptions& o, bool exact) { o.jacobian = exact ? JacobianMode::Exact : JacobianMode::Midpoint; });

  py::class_<MissionSetup>(m, "MissionSetup")
      .def(py::init([](double mu, int k, int s, int n) {
             MissionSetup setup;
             setup.mu = mu;
             setup.k = k;
             setup.s = s;
             setup.n = n;
             return setup;
           }),
           py::arg("mu") = kSunEarthMu, py::arg("k") = 6, py::arg("s") = 2, py::arg("n") = 100)
      .def_readwrite("mu", &MissionSetup::mu)
      .def_readwrite("k", &MissionSetup::k)
      .def_readwrite("s", &MissionSetup::s)
      .def_readwrite("n", &MissionSetup::n)
      .def_readwrite("newton", &MissionSetup::newton);

  py::class_<MeshSolution>(m, "MeshSolution")
      .def_readonly("t0", &MeshSolution::t0)
      .def_readonly("h", &MeshSolution::h)
      .def_property_readonly("n", &MeshSolution::n)
      .def_property_readonly("period", &MeshSolution::period)
      .def_property_readonly("y", [](const MeshSolution& ms) { return stack(ms.y); }, "Nodes, (n + 1) x dim.")
      .def_property_readonly("report", [](const MeshSolution& ms) { return report_dict(ms.report); });

  py::class_<OrbitResult>(m, "OrbitResult")
      .def_readonly("mesh", &OrbitResult::mesh)
      .def_readonly("period_days", &OrbitResult::period_days)
      .def_readonly("energy", &OrbitResult::energy)
      .def_readonly("max_energy_drift", &OrbitResult::max_energy_drift)
      .def_readonly("classification", &OrbitResult::classification)
      .def("__repr__", [](const OrbitResult& r) {
        std::ostringstream os;
        os.precision(10);
        os << "<OrbitResult " << r.classification << ", T = " << r.period_days << " d, H = " << r.energy << ">";
        return os.str();
      });

  py::class_<TransferResult>(m, "TransferResult")
      .def_readonly("mesh", &TransferResult::mesh)
      .def_property_readonly("control", [](const TransferResult& r) { return stack(r.control); })
      .def_readonly("cost", &TransferResult::cost)
      .def_readonly("initial_mismatch", &TransferResult::initial_mismatch)
      .def_readonly("final_mismatch", &TransferResult::final_mismatch)
      .def_readonly("hamiltonian_error", &TransferResult::hamiltonian_error)
      .def_readonly("max_relative_drift", &TransferResult::max_relative_drift);

  m.def("l2_state", &l2_state, py::arg("mu") = kSunEarthMu, py::arg("spatial") = true);
  m.def(
      "center_frequencies", [](const Model& mo, const Vec& eq) { return center_frequencies(*mo.ptr, eq); },
      py::arg("model"), py::arg("equilibrium"));
  m.def("lyapunov_guess", &lyapunov_guess, py::arg("setup"), py::arg("amplitude") = 1e-2);
  m.def(
      "halo_guess",
      [](const MissionSetup& setup, double amplitude, double aspect) {
        return halo_guess(setup, {amplitude, aspect, 0.0});
      },
      py::arg("setup"), py::arg("amplitude") = 5e-3, py::arg("aspect") = 2.0);
  m.def("lyapunov_by_period", &lyapunov_by_period, py::arg("setup"), py::arg("T_days"), py::arg("guess"));
  m.def("lyapunov_by_energy", &lyapunov_by_energy, py::arg("setup"), py::arg("H"), py::arg("guess"));
  m.def("halo_by_period", &halo_by_period, py::arg("setup"), py::arg("T_days"), py::arg("guess"));
  m.def("halo_by_energy", &halo_by_energy, py::arg("setup"), py::arg("H"), py::arg("guess"));
  m.def(
      "hill_transfer",
      [](const Vec& P1, const Vec& P2, double tf, const MissionSetup& setup) { return hill_transfer(P1, P2, tf, setup); },
      py::arg("P1"), py::arg("P2"), py::arg("tf"), py::arg("setup"));
  m.def("hill_l2_abscissa", &hill_l2_abscissa);
  m.def("halo_transfer", &halo_transfer, py::arg("A"), py::arg("B"), py::arg("T_days"), py::arg("setup"));
  m.def(
      "winding_number",
      [](const Mat& y, double cx, double cy) {
        std::vector<Vec> rows;
        for (Eigen::Index i = 0; i < y.rows(); ++i) rows.push_back(y.row(i).transpose());
        return winding_number(rows, cx, cy);
      },
      py::arg("y"), py::arg("cx"), py::arg("cy"));
  m.def("days_to_nondim", &days_to_nondim);
  m.def("nondim_to_days", &nondim_to_days);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "hbvm");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = cli::main(int(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"), "Runs `hbvm <args>`; returns (exit status, stdout, stderr).");
}
