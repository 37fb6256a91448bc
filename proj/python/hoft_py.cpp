#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hoft/adapter.hpp"
#include "hoft/checkpoint.hpp"
#include "hoft/cwy.hpp"
#include "hoft/error.hpp"
#include "hoft/metrics.hpp"
#include "hoft/quant.hpp"
#include "hoft/rng.hpp"
#include "hoft/train.hpp"

namespace py = pybind11;

namespace pybind11::detail {

// hoft::Matrix <-> 2-D float64 ndarray (1-D arrays become column vectors).
template <>
struct type_caster<hoft::Matrix> {
  PYBIND11_TYPE_CASTER(hoft::Matrix, const_name("numpy.ndarray[float64]"));

  bool load(handle src, bool convert) {
    if (!convert && !array_t<double>::check_(src)) return false;
    auto arr = array_t<double, array::c_style | array::forcecast>::ensure(src);
    if (!arr || arr.ndim() < 1 || arr.ndim() > 2) return false;
    const auto rows = static_cast<std::size_t>(arr.shape(0));
    const auto cols = arr.ndim() == 2 ? static_cast<std::size_t>(arr.shape(1)) : 1;
    value = hoft::Matrix(rows, cols, std::vector<double>(arr.data(), arr.data() + arr.size()));
    return true;
  }

  static handle cast(const hoft::Matrix& m, return_value_policy, handle) {
    array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out.release();
  }
};

}  // namespace pybind11::detail

namespace {

struct PyAdapter {
  hoft::Adapter a;
};

PyAdapter make_adapter(const std::string& kind, std::size_t m, std::size_t n, std::size_t rank,
                           std::uint64_t seed, const std::string& mode) {
  hoft::Rng rng(seed);
  return {hoft::init_adapter(hoft::parse_adapter_kind(kind), m, n, rank, rng,
                             hoft::parse_inverse_mode(mode))};
}

}  // namespace

PYBIND11_MODULE(pyhoft, mod) {
  mod.doc() = "Householder orthogonal fine-tuning kernels";
  mod.attr("__version__") = HOFT_VERSION;

  py::register_exception<hoft::Error>(mod, "HoftError", PyExc_ValueError);

  mod.def("gaussian", [](std::uint64_t seed, std::size_t rows, std::size_t cols) {
    hoft::Rng rng(seed);
    return hoft::gaussian_matrix(rng, rows, cols);
  }, py::arg("seed"), py::arg("rows"), py::arg("cols"));

  py::class_<hoft::CwyFactors>(mod, "CwyFactors")
      .def_readonly("u", &hoft::CwyFactors::u)
      .def_readonly("s", &hoft::CwyFactors::s)
      .def_readonly("core", &hoft::CwyFactors::core)
      .def_property_readonly("mode", [](const hoft::CwyFactors& f) {
        return std::string(hoft::to_string(f.mode));
      })
      .def_property_readonly("rank", &hoft::CwyFactors::rank)
      .def_property_readonly("dim", &hoft::CwyFactors::dim);

  mod.def("build_factors", [](const hoft::Matrix& u, const std::string& mode, double clamp_eps) {
    return hoft::build_factors(u, hoft::parse_inverse_mode(mode), clamp_eps);
  }, py::arg("u"), py::arg("mode") = "neumann2", py::arg("clamp_eps") = hoft::kDefaultClampEps);
  mod.def("materialize_q", &hoft::materialize_q);
  mod.def("exact_q", &hoft::exact_q);
  mod.def("approx_q", &hoft::approx_q);
  mod.def("neumann_inverse", &hoft::neumann_inverse, py::arg("factors"), py::arg("terms"));
  mod.def("apply_q", &hoft::apply_q, py::arg("factors"), py::arg("x"));
  mod.def("sequential_chain_q", &hoft::sequential_chain_q);
  mod.def("orthogonality_error",
          py::overload_cast<const hoft::Matrix&>(&hoft::orthogonality_error));
  mod.def("factored_orthogonality_error",
          py::overload_cast<const hoft::CwyFactors&>(&hoft::orthogonality_error));
  mod.def("hyperspherical_energy", &hoft::hyperspherical_energy);

  py::class_<PyAdapter>(mod, "Adapter")
      .def_property_readonly("kind", [](const PyAdapter& p) {
        return std::string(hoft::to_string(hoft::kind_of(p.a)));
      })
      .def_property_readonly("out_dim", [](const PyAdapter& p) { return hoft::out_dim(p.a); })
      .def_property_readonly("in_dim", [](const PyAdapter& p) { return hoft::in_dim(p.a); })
      .def_property_readonly("rank", [](const PyAdapter& p) { return hoft::rank_of(p.a); })
      .def("param_count", [](const PyAdapter& p) { return hoft::param_count(p.a); })
      .def("parameters", [](const PyAdapter& p) {
        py::dict out;
        for (const auto& ref : hoft::parameters(p.a)) out[py::str(std::string(ref.name))] = *ref.value;
        return out;
      })
      .def("forward", [](const PyAdapter& p, const hoft::Matrix& w0, const hoft::Matrix& x) {
        return hoft::forward(p.a, w0, x);
      }, py::arg("w0"), py::arg("x"))
      .def("merge", [](const PyAdapter& p, const hoft::Matrix& w0) { return hoft::merge(p.a, w0); })
      .def("to_json", [](const PyAdapter& p) {
        return hoft::checkpoint_to_json(hoft::Checkpoint{p.a, std::nullopt, std::nullopt});
      });

  mod.def("init_adapter", &make_adapter, py::arg("kind"), py::arg("m"), py::arg("n"),
          py::arg("rank"), py::arg("seed") = 0, py::arg("mode") = "neumann2");
  mod.def("adapter_from_json", [](const std::string& text) {
    return PyAdapter{hoft::checkpoint_from_json(text).adapter};
  });

  py::class_<hoft::Nf4Tensor>(mod, "Nf4Tensor")
      .def_readonly("rows", &hoft::Nf4Tensor::rows)
      .def_readonly("cols", &hoft::Nf4Tensor::cols)
      .def_readonly("block_size", &hoft::Nf4Tensor::block_size)
      .def_property_readonly("codes", [](const hoft::Nf4Tensor& q) {
        return py::bytes(reinterpret_cast<const char*>(q.codes.data()), q.codes.size());
      })
      .def_property_readonly("double_quantized", &hoft::Nf4Tensor::double_quantized)
      .def("__eq__", [](const hoft::Nf4Tensor& a, const hoft::Nf4Tensor& b) { return a == b; });

  mod.def("nf4_levels", [] {
    const auto& lv = hoft::nf4_levels();
    return std::vector<double>(lv.begin(), lv.end());
  });
  mod.def("quantize", &hoft::quantize, py::arg("w"), py::arg("block_size") = hoft::kNf4BlockSize,
          py::arg("double_quant") = false);
  mod.def("dequantize", &hoft::dequantize);
  mod.def("relative_rms_error", &hoft::relative_rms_error);

  mod.def("train", [](const std::string& method, const std::string& task, std::size_t m,
                      std::size_t n, std::size_t rank, std::size_t k, std::size_t steps, double lr,
                      std::uint64_t seed, double noise) {
    hoft::Rng rng(seed);
    const auto t = hoft::make_task(hoft::parse_task_kind(task), m, n, k, noise, rng);
    hoft::TrainConfig cfg;
    cfg.method = hoft::parse_adapter_kind(method);
    cfg.rank = rank;
    cfg.steps = steps;
    cfg.lr = lr;
    auto result = hoft::train(cfg, t, rng);
    return py::make_tuple(result.trace.losses, PyAdapter{result.adapter});
  }, py::arg("method"), py::arg("task"), py::arg("m"), py::arg("n"), py::arg("rank"),
     py::arg("k"), py::arg("steps"), py::arg("lr") = 1e-2, py::arg("seed") = 1,
     py::arg("noise") = 0.0);
}
