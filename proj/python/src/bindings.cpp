#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "fraclab/capacity.hpp"
#include "fraclab/constants.hpp"
#include "fraclab/domain.hpp"
#include "fraclab/errors.hpp"
#include "fraclab/hardy.hpp"
#include "fraclab/kfunctional.hpp"
#include "fraclab/norms.hpp"
#include "fraclab/parallel.hpp"

namespace py = pybind11;
using namespace fraclab;

namespace {

py::dict profile_dict(const KProfile& pr) {
  py::dict d;
  d["t"] = pr.t;
  d["k"] = pr.k;
  d["lower"] = pr.lower;
  d["residual"] = pr.residual;
  d["u_norm"] = pr.u_norm;
  d["grad_norm"] = pr.grad_norm;
  return d;
}

py::dict xnorm_dict(const XNormResult& x) {
  py::dict d;
  d["value"] = x.value;
  d["upper"] = x.upper();
  d["head_bound"] = x.head_bound;
  d["tail_bound"] = x.tail_bound;
  d["t_min"] = x.t_min;
  d["t_max"] = x.t_max;
  d["n_t"] = x.n_t;
  return d;
}

Profile1D make_profile(std::vector<double> t, std::vector<double> f, std::vector<double> fp) {
  return {std::move(t), std::move(f), std::move(fp)};
}

}  // namespace

PYBIND11_MODULE(_fraclab, m) {
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.def("set_num_threads", &set_num_threads);
  m.def("num_threads", &num_threads);

  py::class_<GridDomain, std::shared_ptr<GridDomain>>(m, "GridDomain")
      .def_property_readonly("dim", &GridDomain::dim)
      .def_property_readonly("spacing", &GridDomain::spacing)
      .def_property_readonly("num_nodes", &GridDomain::num_nodes)
      .def_property_readonly("num_active", &GridDomain::num_active)
      .def_property_readonly("label", &GridDomain::label)
      .def("active_nodes",
           [](const GridDomain& d) { return std::vector<std::size_t>(d.active_nodes().begin(), d.active_nodes().end()); })
      .def("coordinate", &GridDomain::coordinate)
      .def("dilated", [](const GridDomain& d, double f) { return std::make_shared<GridDomain>(d.dilated(f)); });

  m.def("make_box", [](int dim, double side, double h, double origin) {
    return std::make_shared<GridDomain>(make_box(dim, side, h, origin));
  }, py::arg("dim"), py::arg("side_length"), py::arg("h"), py::arg("origin") = 0.0);
  m.def("make_cracked_domain", [](int dim, int n, double h) {
    return std::make_shared<GridDomain>(make_cracked_domain(dim, n, h));
  }, py::arg("dim"), py::arg("n"), py::arg("h"));

  py::class_<GridFunction>(m, "GridFunction")
      .def(py::init([](std::shared_ptr<GridDomain> d, Eigen::VectorXd v) { return GridFunction(d, std::move(v)); }),
           py::arg("domain"), py::arg("values"))
      .def_property_readonly("values", &GridFunction::values)
      .def("box_values", &GridFunction::box_values);
  m.def("bump_function", [](std::shared_ptr<GridDomain> d, Point2 c, double r) { return bump_function(d, c, r); },
        py::arg("domain"), py::arg("center"), py::arg("radius"));

  m.def("lp_norm", &lp_norm, py::arg("u"), py::arg("p"));
  m.def("grad_seminorm", &grad_seminorm, py::arg("u"), py::arg("p"));
  m.def("gagliardo_global", &gagliardo_global, py::arg("u"), py::arg("s"), py::arg("p"));
  m.def("gagliardo_local", &gagliardo_local, py::arg("u"), py::arg("s"), py::arg("p"));
  m.def("unit_ball_volume", [](int dim) { return math_constants(dim, 2.0).omega; }, py::arg("dim"));

  m.def("k_functional", [](double t, const GridFunction& u, double p) { return k_functional(t, u, p); },
        py::arg("t"), py::arg("u"), py::arg("p"));
  m.def("k_profile",
        [](const GridFunction& u, double p, const std::vector<double>& t) { return profile_dict(k_profile(u, p, t)); },
        py::arg("u"), py::arg("p"), py::arg("t"));
  m.def("log_grid", &log_grid, py::arg("t_ref"), py::arg("k_lo"), py::arg("k_hi"), py::arg("per_decade"));
  m.def("x_norm", [](const GridFunction& u, double s, double p) { return xnorm_dict(x_norm(u, s, p)); },
        py::arg("u"), py::arg("s"), py::arg("p"));

  m.def("lambda1", [](std::shared_ptr<GridDomain> d, double p) { return lambda1(d, p); }, py::arg("domain"),
        py::arg("p"));
  m.def("lambdaS", [](std::shared_ptr<GridDomain> d, double s, double p) { return lambdaS(d, s, p); },
        py::arg("domain"), py::arg("s"), py::arg("p"));
  m.def("LambdaS_upper", [](std::shared_ptr<GridDomain> d, double s, double p) { return LambdaS_upper(d, s, p).value; },
        py::arg("domain"), py::arg("s"), py::arg("p"));
  m.def("doubleside_check", [](std::shared_ptr<GridDomain> d, double s, double p, double slack) {
    DoubleSideOptions opt;
    opt.slack = slack;
    const ConstantReport r = doubleside_check(d, s, p, opt);
    py::dict out;
    out["lambda1"] = r.lambda1;
    out["lambdaS"] = r.lambdaS;
    out["residual_oneside"] = r.residual_oneside;
    out["residual_twosideconv"] = r.residual_twosideconv;
    out["oneside_ok"] = r.oneside_ok;
    return out;
  }, py::arg("domain"), py::arg("s"), py::arg("p"), py::arg("slack") = 0.05);

  m.def("cap_sp", [](const std::vector<std::size_t>& F, std::shared_ptr<GridDomain> box, double s, double p) {
    return cap_sp(F, box, s, p).value;
  }, py::arg("nodes"), py::arg("box"), py::arg("s"), py::arg("p"));
  m.def("cap_local", [](const std::vector<std::size_t>& F, std::shared_ptr<GridDomain> box, double p) {
    return cap_local(F, box, p).value;
  }, py::arg("nodes"), py::arg("box"), py::arg("p"));
  m.def("capacity_box", [](int dim, double h, const std::vector<Point2>& pts, double factor) {
    const CapacitySetup su = capacity_box(dim, h, pts, factor);
    return py::make_tuple(std::const_pointer_cast<GridDomain>(su.box), su.nodes);
  }, py::arg("dim"), py::arg("h"), py::arg("points"), py::arg("factor") = 8.0);

  m.def("hardy_terms", [](std::vector<double> t, std::vector<double> f, std::vector<double> fp, double alpha,
                          double p) {
    const HardyTerms h = hardy_terms(make_profile(std::move(t), std::move(f), std::move(fp)), alpha, p);
    return py::make_tuple(h.lhs, h.rhs, h.constant, h.margin);
  }, py::arg("t"), py::arg("f"), py::arg("fprime"), py::arg("alpha"), py::arg("p"));
  m.def("power_cutoff_profile", [](double beta, double delta, double T) {
    const Profile1D pr = power_cutoff_profile(beta, delta, T);
    return py::make_tuple(pr.t, pr.f, pr.fprime);
  }, py::arg("beta"), py::arg("delta"), py::arg("T"));

  m.def("cone_eccentricity", &cone_eccentricity, py::arg("beta"));
  m.def("polygon_eccentricity", [](const std::vector<Point2>& v) { return eccentricity(ConvexPolygon(v)); },
        py::arg("vertices"));

  m.def("command_names", &app::command_names);
  m.def("run_command", [](const std::string& name, const std::string& config, std::uint64_t seed, int threads) {
    app::CommandOutput out;
    {
      py::gil_scoped_release release;
      nlohmann::json cfg;
      try {
        cfg = nlohmann::json::parse(config);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
      }
      out = app::run_command(name, cfg, {seed, threads});
    }
    return py::make_tuple(out.text, out.exit_code, out.failures);
  }, py::arg("name"), py::arg("config"), py::arg("seed"), py::arg("threads") = 1);

  m.attr("__version__") = FRACLAB_VERSION;
}
