#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cornerheat/errors.hpp"
#include "cornerheat/geometry.hpp"
#include "cornerheat/harness.hpp"
#include "cornerheat/singular.hpp"

namespace py = pybind11;
using namespace cornerheat;

namespace {

TriMesh refined(TriMesh m, int level) {
  if (level < 1) throw Error("level must be at least 1");
  for (int l = 1; l < level; ++l) m = uniform_refine(m);
  return m;
}

StudyConfig make_config(const std::string& study, int levels, double dt0, double t_end, std::optional<double> gamma,
                        std::optional<double> alpha, int substeps, bool zero_source, const std::string& out) {
  StudyConfig cfg;
  cfg.study = parse_study(study);
  cfg.levels = levels;
  cfg.dt0 = dt0;
  cfg.t_end = t_end;
  cfg.gamma = gamma;
  cfg.alpha = alpha;
  cfg.substeps = substeps;
  cfg.zero_source = zero_source;
  cfg.out = out;
  return cfg;
}

py::list checks_to_list(const std::vector<Check>& checks) {
  py::list out;
  for (const auto& c : checks) out.append(py::make_tuple(c.name, c.pass, c.detail));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Energy-corrected P1 finite elements for the heat equation near re-entrant corners";

  py::register_exception<Error>(m, "CornerheatError", PyExc_RuntimeError);

  py::class_<TriMesh>(m, "Mesh")
      .def_property_readonly("vertices",
                             [](const TriMesh& mesh) {
                               py::array_t<double> a({static_cast<py::ssize_t>(mesh.num_vertices()), py::ssize_t{2}});
                               auto v = a.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
                                 v(i, 0) = mesh.vertices[i].x;
                                 v(i, 1) = mesh.vertices[i].y;
                               }
                               return a;
                             })
      .def_property_readonly("triangles",
                             [](const TriMesh& mesh) {
                               py::array_t<int> a({static_cast<py::ssize_t>(mesh.num_triangles()), py::ssize_t{3}});
                               auto t = a.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < mesh.num_triangles(); ++i) {
                                 for (int k = 0; k < 3; ++k) t(i, k) = mesh.triangles[i][static_cast<std::size_t>(k)];
                               }
                               return a;
                             })
      .def_readonly("level", &TriMesh::level)
      .def_readonly("h", &TriMesh::h)
      .def_readonly("h_min", &TriMesh::h_min)
      .def_property_readonly("corner_angles",
                             [](const TriMesh& mesh) {
                               std::vector<double> a;
                               for (const auto& c : mesh.corners) a.push_back(c.theta);
                               return a;
                             })
      .def("area", &mesh_area)
      .def("audit", &audit_mesh)
      .def("refine", &uniform_refine)
      .def("to_tmesh", [](const TriMesh& mesh) {
        std::ostringstream s;
        write_tmesh(s, mesh);
        return s.str();
      });

  m.def("l_shape", [](int level) { return refined(build_l_shape(), level); }, py::arg("level") = 1);
  m.def("notched_rectangle", [](int level) { return refined(build_notched_rectangle(), level); },
        py::arg("level") = 1);
  m.def("read_tmesh", [](const std::string& text) {
    std::istringstream s(text);
    return read_tmesh(s);
  });

  m.def(
      "singular_function",
      [](int n, py::array_t<double, py::array::c_style | py::array::forcecast> points) {
        if (points.ndim() != 2 || points.shape(1) != 2) throw Error("points must have shape (n, 2)");
        const SingularFunction s(n, l_shape_corner(), n < 0 ? std::optional<CutoffEta>(CutoffEta{}) : std::nullopt);
        auto p = points.unchecked<2>();
        py::array_t<double> out(points.shape(0));
        auto o = out.mutable_unchecked<1>();
        for (py::ssize_t i = 0; i < points.shape(0); ++i) o(i) = s.value({p(i, 0), p(i, 1)});
        return out;
      },
      py::arg("n"), py::arg("points"), "s_n on the L-shape (duals carry the default cutoff).");

  m.def("compute_eoc", [](const std::vector<double>& e) { return compute_eoc(e); });
  m.def("eoc_fit", [](const std::vector<double>& e) { return eoc_fit(e); });

  m.def(
      "run_study",
      [](const std::string& study, int levels, double dt0, double t_end, std::optional<double> gamma,
         std::optional<double> alpha, int substeps, bool zero_source, const std::string& out) {
        const auto cfg = make_config(study, levels, dt0, t_end, gamma, alpha, substeps, zero_source, out);
        std::ostringstream log;
        std::vector<Check> checks;
        {
          py::gil_scoped_release release;
          checks = run_study(cfg, log);
        }
        return py::make_tuple(checks_to_list(checks), log.str());
      },
      py::arg("study"), py::arg("levels") = 0, py::arg("dt0") = 0.0, py::arg("t_end") = 1.0,
      py::arg("gamma") = py::none(), py::arg("alpha") = py::none(), py::arg("substeps") = 0,
      py::arg("zero_source") = false, py::arg("out") = "",
      "Runs a study; returns ([(name, passed, detail)], log text).");

  m.def(
      "convergence_csv",
      [](const std::string& study, int levels, double dt0, double t_end, std::optional<double> gamma) {
        const auto cfg = make_config(study, levels, dt0, t_end, gamma, std::nullopt, 0, false, "");
        py::gil_scoped_release release;
        if (cfg.study == Study::table1) {
          const auto r = run_table1(cfg);
          return std::make_pair(r.standard.to_csv(), r.corrected.to_csv());
        }
        if (cfg.study == Study::elliptic_pollution) {
          const auto r = run_elliptic_pollution(cfg);
          return std::make_pair(r.standard.to_csv(), r.corrected.to_csv());
        }
        throw Error("convergence_csv supports table1 and elliptic_pollution");
      },
      py::arg("study"), py::arg("levels") = 0, py::arg("dt0") = 0.0, py::arg("t_end") = 1.0,
      py::arg("gamma") = py::none(), "(standard CSV, corrected CSV) of a convergence study.");

  m.def(
      "gamma_report",
      [](int levels) {
        StudyConfig cfg;
        cfg.study = Study::gamma;
        cfg.levels = levels;
        py::gil_scoped_release release;
        return run_gamma(cfg).to_json();
      },
      py::arg("levels") = 0, "GammaSearchReport as JSON text.");
}
