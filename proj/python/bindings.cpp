#include "ffdfit/errors.hpp"
#include "ffdfit/ffd.hpp"
#include "ffdfit/fit.hpp"
#include "ffdfit/geometry.hpp"
#include "ffdfit/io.hpp"
#include "ffdfit/metrics.hpp"
#include "ffdfit/regularizers.hpp"
#include "ffdfit/retrieval.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace ffdfit;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Indices = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

PointCloud to_cloud(const Eigen::Ref<const Points>& m) {
  std::vector<Vec3> pts(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) pts[static_cast<std::size_t>(i)] = m.row(i).transpose();
  return PointCloud(std::move(pts));
}

Points to_array(std::span<const Vec3> pts) {
  Points m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

Points to_array(const PointCloud& pc) { return to_array(pc.points()); }

LatticeDegrees degrees_from(const std::array<int, 3>& d) { return {d[0], d[1], d[2]}; }

DeformationField field_from(const ControlLattice& lattice, const Eigen::Ref<const Points>& offsets) {
  const auto pc = to_cloud(offsets);
  DeformationField field{lattice.degrees(), {pc.begin(), pc.end()}};
  field.check_matches(lattice);
  return field;
}

EmbeddingBatch batch_from(const Eigen::Ref<const Rows>& features, const std::vector<int>& labels,
                          const std::vector<int>& instances) {
  EmbeddingBatch b;
  for (Eigen::Index i = 0; i < features.rows(); ++i) b.features.push_back(features.row(i).transpose());
  b.labels = labels;
  b.instances = instances;
  return b;
}

Rows to_rows(const std::vector<Feature>& v) {
  Rows m(static_cast<Eigen::Index>(v.size()), v.empty() ? 0 : v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Point cloud template fitting with free-form deformation";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FileNotFound>(m, "FileNotFound", PyExc_FileNotFoundError);
  py::register_exception<UnsupportedFormat>(m, "UnsupportedFormat", PyExc_ValueError);
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", PyExc_ValueError);
  py::register_exception<SizeMismatch>(m, "SizeMismatch", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FitDiverged>(m, "FitDiverged", PyExc_RuntimeError);

  m.def(
      "sample_surface",
      [](const Eigen::Ref<const Points>& vertices, const Eigen::Ref<const Indices>& faces, std::size_t n,
         std::uint64_t seed) {
        TriangleMesh mesh;
        const auto pc = to_cloud(vertices);
        mesh.vertices.assign(pc.begin(), pc.end());
        for (Eigen::Index f = 0; f < faces.rows(); ++f) {
          Face face;
          for (int c = 0; c < 3; ++c) {
            if (faces(f, c) < 0 || faces(f, c) >= vertices.rows()) throw ParseError("face index out of range");
            face[static_cast<std::size_t>(c)] = static_cast<std::size_t>(faces(f, c));
          }
          mesh.faces.push_back(face);
        }
        return to_array(sample_surface(mesh, n, seed));
      },
      py::arg("vertices"), py::arg("faces"), py::arg("n") = 16384, py::arg("seed") = 0);

  m.def(
      "load_mesh",
      [](const std::filesystem::path& path) {
        const auto mesh = load_mesh(path);
        Indices faces(static_cast<Eigen::Index>(mesh.faces.size()), 3);
        for (std::size_t f = 0; f < mesh.faces.size(); ++f)
          for (int c = 0; c < 3; ++c)
            faces(static_cast<Eigen::Index>(f), c) = static_cast<std::int64_t>(mesh.faces[f][static_cast<std::size_t>(c)]);
        return py::make_tuple(to_array(mesh.vertices), faces);
      },
      py::arg("path"));
  m.def("read_point_cloud", [](const std::filesystem::path& p) { return to_array(read_point_cloud(p)); },
        py::arg("path"));
  m.def(
      "write_point_cloud",
      [](const std::filesystem::path& p, const Eigen::Ref<const Points>& pts) { write_point_cloud(p, to_cloud(pts)); },
      py::arg("path"), py::arg("points"));

  m.def(
      "normalize",
      [](const Eigen::Ref<const Points>& pts) {
        const auto n = normalize_for_eval(to_cloud(pts));
        return py::make_tuple(to_array(n.cloud), n.transform.scale, Eigen::Vector3d(n.transform.translation));
      },
      py::arg("points"));
  m.def(
      "resample",
      [](const Eigen::Ref<const Points>& pts, std::size_t n, std::uint64_t seed) {
        return to_array(resample(to_cloud(pts), n, seed));
      },
      py::arg("points"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "chamfer",
      [](const Eigen::Ref<const Points>& a, const Eigen::Ref<const Points>& b) {
        const auto v = chamfer_fast(to_cloud(a), to_cloud(b));
        return py::make_tuple(v.sum(), v.average());
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "chamfer_grad",
      [](const Eigen::Ref<const Points>& a, const Eigen::Ref<const Points>& b) {
        return to_array(chamfer_grad(to_cloud(a), to_cloud(b)));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "emd",
      [](const Eigen::Ref<const Points>& a, const Eigen::Ref<const Points>& b) {
        const auto r = emd_exact(to_cloud(a), to_cloud(b));
        return py::make_tuple(r.cost, r.mapping);
      },
      py::arg("a"), py::arg("b"));

  py::class_<ControlLattice>(m, "ControlLattice")
      .def_static(
          "around",
          [](const Eigen::Ref<const Points>& pts, std::array<int, 3> degrees, double padding) {
            return ControlLattice::around(to_cloud(pts), degrees_from(degrees), padding);
          },
          py::arg("points"), py::arg("degrees") = std::array<int, 3>{3, 3, 3}, py::arg("padding") = 0.05)
      .def_property_readonly("degrees",
                             [](const ControlLattice& l) {
                               return std::array<int, 3>{l.degrees().l, l.degrees().m, l.degrees().n};
                             })
      .def_property_readonly("control_count", &ControlLattice::control_count)
      .def_property_readonly("domain",
                             [](const ControlLattice& l) {
                               return py::make_tuple(Eigen::Vector3d(l.domain().min), Eigen::Vector3d(l.domain().max));
                             })
      .def("rest_positions", [](const ControlLattice& l) { return to_array(l.rest_positions()); });

  m.def(
      "deform",
      [](const ControlLattice& lattice, const Eigen::Ref<const Points>& offsets, const Eigen::Ref<const Points>& pts) {
        return to_array(deform(lattice, field_from(lattice, offsets), to_cloud(pts)));
      },
      py::arg("lattice"), py::arg("offsets"), py::arg("points"));

  m.def(
      "fit",
      [](const Eigen::Ref<const Points>& tmpl, const Eigen::Ref<const Points>& target, const py::dict& options) {
        FitConfig config;
        for (const auto& [key, value] : options) {
          set_config_value(config, py::str(key), py::str(value));
        }
        config.validate();
        const auto t = to_cloud(tmpl);
        const auto lattice = ControlLattice::around(
            t, {config.lattice_degree, config.lattice_degree, config.lattice_degree}, config.lattice_padding);
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_deformation(t, to_cloud(target), lattice, config);
        }
        Eigen::MatrixXd trace(static_cast<Eigen::Index>(r.trace.size()), 6);
        for (std::size_t i = 0; i < r.trace.size(); ++i) {
          const auto& rec = r.trace[i];
          trace.row(static_cast<Eigen::Index>(i)) << rec.iteration, rec.total, rec.data, rec.reg_l1, rec.reg_smooth,
              rec.grad_norm;
        }
        py::dict out;
        out["lattice"] = lattice;
        out["offsets"] = to_array(r.field.offsets);
        out["deformed"] = to_array(deform(lattice, r.field, t));
        out["trace"] = trace;
        out["final_loss"] = r.final_loss.total;
        return out;
      },
      py::arg("template"), py::arg("target"), py::arg("options") = py::dict());

  m.def(
      "descriptor",
      [](const Eigen::Ref<const Points>& pts, int bins, std::size_t pairs, std::uint64_t seed) {
        return Eigen::VectorXd(shape_descriptor(to_cloud(pts), {bins, pairs, seed}));
      },
      py::arg("points"), py::arg("bins") = 64, py::arg("pairs") = 4096, py::arg("seed") = 0);
  m.def(
      "lifted_loss",
      [](const Eigen::Ref<const Rows>& features, const std::vector<int>& labels, const std::vector<int>& instances,
         double margin) {
        const auto v = lifted_loss(batch_from(features, labels, instances), margin);
        return py::make_tuple(v.value, to_rows(v.grad));
      },
      py::arg("features"), py::arg("labels"), py::arg("instances") = std::vector<int>{}, py::arg("margin") = 1.0);
  m.def(
      "margin_violations",
      [](const Eigen::Ref<const Rows>& features, const std::vector<int>& labels, const std::vector<int>& instances,
         double margin) { return triplet_margin_violations(batch_from(features, labels, instances), margin).count; },
      py::arg("features"), py::arg("labels"), py::arg("instances") = std::vector<int>{}, py::arg("margin") = 1.0);
}
