#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ssmcde/chaining.hpp"
#include "ssmcde/dataset.hpp"
#include "ssmcde/errors.hpp"
#include "ssmcde/experiments.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/rff_kernel.hpp"
#include "ssmcde/signature.hpp"
#include "ssmcde/ssm_layers.hpp"

namespace py = pybind11;
using namespace ssmcde;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// Rows are samples at the grid times; the path is shifted to start at the origin.
Path as_path(const Matrix& values) { return Path::from_samples(values); }

Vector coeffs(const TruncatedTensor& t) {
  return Eigen::Map<const Vector>(t.coeffs().data(), static_cast<Eigen::Index>(t.size()));
}

DenseCdeParams dense(const std::vector<Matrix>& A, const Matrix& B, const Matrix& C) {
  DenseCdeParams p;
  p.A = A;
  p.B = B;
  p.C = C;
  p.v = Vector::Zero(C.rows());
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Signatures, linear CDEs and selective state-space layers";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<OverflowError>(m, "OverflowError", PyExc_OverflowError);
  py::register_exception<ResourceError>(m, "ResourceError", PyExc_RuntimeError);

  m.def("tensor_size", &tensor_size, py::arg("d"), py::arg("depth"));
  m.def("word_index", [](const Word& w, std::size_t d, int depth) { return word_index(w, d, depth); },
        py::arg("word"), py::arg("d"), py::arg("depth"));
  m.def("signature", [](const Matrix& values, int depth, double s, double t) {
          return coeffs(signature(as_path(values), s, t, depth));
        },
        py::arg("values"), py::arg("depth"), py::arg("s") = 0.0, py::arg("t") = 1.0);
  m.def("brute_force_signature", [](const Matrix& values, int depth, int refinement, bool left_point) {
          return coeffs(brute_force_signature(as_path(values), 0.0, 1.0, depth, refinement,
                                              left_point ? Quadrature::left_point : Quadrature::trapezoid));
        },
        py::arg("values"), py::arg("depth"), py::arg("refinement") = 200, py::arg("left_point") = false);

  m.def("solve_dense", [](const std::vector<Matrix>& A, const Matrix& B, const Matrix& C, const Matrix& omega,
                          const Matrix& xi, const Vector& x0) {
          return solve_dense(dense(A, B, C), as_path(omega), as_path(xi), x0);
        },
        py::arg("A"), py::arg("B"), py::arg("C"), py::arg("omega"), py::arg("xi"), py::arg("x0"));
  m.def("solve_diagonal", [](const Matrix& V, const Matrix& B, const Matrix& C, const Matrix& omega,
                             const Matrix& xi, const Vector& x0) {
          DiagonalCdeParams p{V, B, C, Vector::Zero(C.rows())};
          return solve_diagonal(p, as_path(omega), as_path(xi), x0);
        },
        py::arg("V"), py::arg("B"), py::arg("C"), py::arg("omega"), py::arg("xi"), py::arg("x0"));

  m.def("s4_forward", [](const Matrix& a, const Vector& b, const Vector& step, const Matrix& readout,
                         const Matrix& x) {
          const auto out = s4_forward(S4Params{a, b, step, readout}, x);
          return py::make_tuple(out.states, out.outputs);
        },
        py::arg("a"), py::arg("b"), py::arg("step"), py::arg("readout"), py::arg("x"));
  m.def("s6_forward", [](const Matrix& a, const Vector& b, const Vector& alpha, const Vector& beta, double delta,
                         const std::string& gate, const Matrix& readout, const Matrix& x) {
          if (gate != "softplus" && gate != "relu") throw DomainError("gate must be softplus or relu");
          S6Params p{a, b, alpha, beta, delta, gate == "relu" ? DeltaGate::relu : DeltaGate::softplus, readout};
          const auto out = s6_forward(p, x);
          return py::make_tuple(out.states, out.outputs);
        },
        py::arg("a"), py::arg("b"), py::arg("alpha"), py::arg("beta"), py::arg("delta"),
        py::arg("gate") = "softplus", py::arg("readout"), py::arg("x"));

  m.def("kernel_goursat", [](const Matrix& omega_x, const Matrix& xi_x, const Vector& x0_x, const Matrix& omega_y,
                             const Matrix& xi_y, const Vector& x0_y, int refinement) {
          return kernel_goursat(as_path(omega_x), as_path(xi_x), x0_x, as_path(omega_y), as_path(xi_y), x0_y,
                                refinement);
        },
        py::arg("omega_x"), py::arg("xi_x"), py::arg("x0_x"), py::arg("omega_y"), py::arg("xi_y"),
        py::arg("x0_y"), py::arg("refinement") = 1);
  m.def("sample_lecun", [](std::uint64_t seed, std::size_t N, std::size_t d0, std::size_t d_omega,
                           std::size_t d_xi) {
          const DenseCdeParams p = sample_lecun({seed, N, d0, d_omega, d_xi});
          py::dict d;
          d["A"] = p.A;
          d["B"] = p.B;
          d["C"] = p.C;
          return d;
        },
        py::arg("seed"), py::arg("N"), py::arg("d0") = 1, py::arg("d_omega") = 1, py::arg("d_xi") = 1);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("samples", [](const Dataset& d) { return d.samples; })
      .def_property_readonly("targets", [](const Dataset& d) { return d.targets; })
      .def_readonly("num_train", &Dataset::num_train)
      .def_property_readonly("metadata", [](const Dataset& d) { return to_py(d.metadata()); })
      .def("__len__", &Dataset::size);
  m.def("gen_dataset", [](std::size_t num_samples, int dim, std::size_t num_steps, std::uint64_t seed) {
          DatasetSpec spec;
          spec.num_samples = num_samples;
          spec.dim = dim;
          spec.num_steps = num_steps;
          spec.seed = seed;
          return gen_dataset(spec);
        },
        py::arg("num_samples") = 10000, py::arg("dim") = 2, py::arg("num_steps") = 100, py::arg("seed") = 0);
  m.def("save_dataset", &save_dataset, py::arg("file"), py::arg("dataset"));
  m.def("load_dataset", &load_dataset, py::arg("file"));

  m.def("train", [](const py::object& config, const Dataset& data) {
          const TrainConfig c = train_config_from_json(from_py(config));
          RunRecord rec;
          {
            py::gil_scoped_release release;
            rec = train_model(c, data);
          }
          py::object out = to_py(to_json(rec));
          out["wall_time"] = rec.wall_time;
          return out;
        },
        py::arg("config"), py::arg("dataset"));
  m.def("run_suite", [](const std::string& manifest) {
          const SuiteReport rep = run_suite(manifest);
          py::list runs;
          for (const auto& r : rep.runs) runs.append(to_py(to_json(r)));
          py::dict d;
          d["runs"] = runs;
          d["failures"] = rep.failures;
          d["ok"] = rep.ok();
          return d;
        },
        py::arg("manifest"));

  m.def("build_signature_chain", [](const Word& word, double tolerance, std::size_t width, std::uint64_t seed,
                                    std::size_t time_stride) {
          ChainBuildOptions o;
          o.width = width;
          o.seed = seed;
          o.time_stride = time_stride;
          return to_py(to_json(build_signature_chain(word, tolerance, o)));
        },
        py::arg("word"), py::arg("tolerance"), py::arg("width") = 256, py::arg("seed") = 0,
        py::arg("time_stride") = 1);
}
