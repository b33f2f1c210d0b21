#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <sstream>

#include "t2lc/autodiff.hpp"
#include "t2lc/cli.hpp"
#include "t2lc/conv_ops.hpp"
#include "t2lc/dist_sim.hpp"
#include "t2lc/errors.hpp"
#include "t2lc/model_zoo.hpp"
#include "t2lc/train_harness.hpp"
#include "t2lc/verify.hpp"
#include "t2lc/version.hpp"

namespace py = pybind11;
using namespace t2lc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Accepts (C, H, W) or (B, C, H, W).
Tensor to_tensor(const Array& a) {
  if (a.ndim() == 3) {
    Tensor t(a.shape(0), a.shape(1), a.shape(2));
    std::copy(a.data(), a.data() + a.size(), t.values().begin());
    return t;
  }
  if (a.ndim() == 4) {
    Tensor t = Tensor::batched(a.shape(0), a.shape(1), a.shape(2), a.shape(3));
    std::copy(a.data(), a.data() + a.size(), t.values().begin());
    return t;
  }
  throw ConfigError("expected a 3-d (C,H,W) or 4-d (B,C,H,W) array");
}

Array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  if (t.is_batched()) shape.push_back(static_cast<py::ssize_t>(t.batch()));
  shape.insert(shape.end(), {static_cast<py::ssize_t>(t.channels()),
                             static_cast<py::ssize_t>(t.height()),
                             static_cast<py::ssize_t>(t.width())});
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

ConvKernel to_kernel(const Array& a) {
  if (a.ndim() != 4 || a.shape(2) != a.shape(3)) {
    throw ConfigError("expected a kernel array of shape (out, in, d, d)");
  }
  return ConvKernel(a.shape(0), a.shape(1), a.shape(2),
                    std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_kernel(const ConvKernel& k) {
  Array out({k.out_channels(), k.in_channels(), k.size(), k.size()});
  std::copy(k.weights().begin(), k.weights().end(), out.mutable_data());
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ConfigError("expected a 2-d array");
  return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.entries().begin(), m.entries().end(), out.mutable_data());
  return out;
}

template <typename T, typename From>
std::vector<T> convert_list(const std::vector<Array>& in, From from) {
  std::vector<T> out;
  out.reserve(in.size());
  for (const Array& a : in) out.push_back(from(a));
  return out;
}

template <typename T, typename To>
std::vector<Array> export_list(const std::vector<T>& in, To to) {
  std::vector<Array> out;
  out.reserve(in.size());
  for (const T& v : in) out.push_back(to(v));
  return out;
}

py::dict comm_dict(const dist::CommReport& r) {
  py::dict d;
  d["messages"] = r.messages;
  d["activation_scalars"] = r.activation_scalars;
  d["activation_scalars_per_sample"] = r.activation_scalars_per_sample();
  d["parameter_scalars"] = r.parameter_scalars;
  d["samples"] = r.samples;
  return d;
}

py::dict count_dict(const zoo::ParamCount& pc) {
  py::dict d;
  d["total"] = pc.total;
  d["per_processor"] = pc.per_processor;
  d["by_role"] = pc.by_role;
  py::list rows;
  for (const auto& c : pc.breakdown) {
    rows.append(py::dict(py::arg("layer") = c.layer, py::arg("role") = c.role,
                         py::arg("total") = c.total, py::arg("per_processor") = c.per_processor));
  }
  d["breakdown"] = rows;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-level group convolution toolkit";
  m.attr("__version__") = std::string(kVersion);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IngestError>(m, "IngestError", PyExc_OSError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<GroupSpec>(m, "GroupSpec")
      .def(py::init([](std::size_t n, std::size_t mm, std::size_t groups, std::size_t d,
                       std::size_t d0) {
             GroupSpec s{n, mm, groups, d, d0};
             s.validate();
             return s;
           }),
           py::arg("n"), py::arg("m"), py::arg("groups"), py::arg("d") = 3, py::arg("d0") = 3)
      .def_readonly("n", &GroupSpec::n)
      .def_readonly("m", &GroupSpec::m)
      .def_readonly("groups", &GroupSpec::groups)
      .def_readonly("d", &GroupSpec::d)
      .def_readonly("d0", &GroupSpec::d0)
      .def("__eq__", [](const GroupSpec& a, const GroupSpec& b) { return a == b; })
      .def("__repr__", [](const GroupSpec& s) {
        std::ostringstream os;
        os << "GroupSpec(n=" << s.n << ", m=" << s.m << ", groups=" << s.groups << ", d=" << s.d
           << ", d0=" << s.d0 << ")";
        return os.str();
      });

  py::class_<TwoLevelParams>(m, "TwoLevelParams")
      .def_static("zeros", &TwoLevelParams::zeros, py::arg("spec"))
      .def_static(
          "he_init",
          [](const GroupSpec& s, std::uint64_t seed, bool zero_coarse) {
            std::mt19937_64 rng(seed);
            return TwoLevelParams::he_init(s, rng, zero_coarse);
          },
          py::arg("spec"), py::arg("seed"), py::arg("zero_coarse") = false)
      .def_static(
          "random",
          [](const GroupSpec& s, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return TwoLevelParams::random(s, rng);
          },
          py::arg("spec"), py::arg("seed"))
      .def_property(
          "local", [](const TwoLevelParams& p) { return export_list(p.local, from_kernel); },
          [](TwoLevelParams& p, const std::vector<Array>& v) {
            p.local = convert_list<ConvKernel>(v, to_kernel);
          })
      .def_property(
          "coarse_restrict",
          [](const TwoLevelParams& p) { return export_list(p.coarse_restrict, from_kernel); },
          [](TwoLevelParams& p, const std::vector<Array>& v) {
            p.coarse_restrict = convert_list<ConvKernel>(v, to_kernel);
          })
      .def_property(
          "coarse_mix", [](const TwoLevelParams& p) { return export_list(p.coarse_mix, from_matrix); },
          [](TwoLevelParams& p, const std::vector<Array>& v) {
            p.coarse_mix = convert_list<Matrix>(v, to_matrix);
          })
      .def("parameter_count", &TwoLevelParams::parameter_count)
      .def("validate", &TwoLevelParams::validate, py::arg("spec"));

  m.def(
      "standard_conv",
      [](const Array& x, const Array& k) { return from_tensor(standard_conv(to_tensor(x), to_kernel(k))); },
      py::arg("x"), py::arg("kernel"));
  m.def(
      "group_conv",
      [](const Array& x, const GroupSpec& s, const std::vector<Array>& local) {
        const auto kernels = convert_list<ConvKernel>(local, to_kernel);
        return from_tensor(group_conv(to_tensor(x), s, kernels));
      },
      py::arg("x"), py::arg("spec"), py::arg("local"));
  m.def(
      "coarse_restrict",
      [](const Array& x, const GroupSpec& s, const std::vector<Array>& kernels) {
        const auto k = convert_list<ConvKernel>(kernels, to_kernel);
        return from_tensor(coarse_restrict(to_tensor(x), s, k));
      },
      py::arg("x"), py::arg("spec"), py::arg("kernels"));
  m.def(
      "coarse_combined_apply",
      [](const Array& x0, const std::vector<Array>& mix, const GroupSpec& s) {
        const auto mats = convert_list<Matrix>(mix, to_matrix);
        return from_tensor(coarse_combined_apply(to_tensor(x0), mats, s));
      },
      py::arg("x0"), py::arg("mix"), py::arg("spec"));
  m.def(
      "two_level",
      [](const Array& x, const GroupSpec& s, const TwoLevelParams& p) {
        return from_tensor(two_level(to_tensor(x), s, p));
      },
      py::arg("x"), py::arg("spec"), py::arg("params"));
  m.def(
      "channel_shuffle",
      [](const Array& x, std::size_t groups) { return from_tensor(channel_shuffle(to_tensor(x), groups)); },
      py::arg("x"), py::arg("groups"));
  m.def(
      "channel_unshuffle",
      [](const Array& x, std::size_t groups) {
        return from_tensor(channel_unshuffle(to_tensor(x), groups));
      },
      py::arg("x"), py::arg("groups"));

  m.def(
      "finite_diff_check",
      [](const std::string& op, const GroupSpec& s, std::size_t hw, std::uint64_t seed, double h) {
        const grad::OpInstance inst = grad::make_instance(grad::parse_op(op), s, hw, hw, seed);
        const grad::FdReport r = grad::finite_diff_check(inst, seed, h);
        return py::make_tuple(r.max_rel_error, r.worst_coordinate);
      },
      py::arg("op"), py::arg("spec"), py::arg("hw") = 5, py::arg("seed") = 1, py::arg("h") = 1e-6);

  m.def(
      "forward_distributed",
      [](const GroupSpec& s, const TwoLevelParams& p, const Array& x) {
        const dist::DistributedForward df = dist::forward_distributed(s, p, to_tensor(x));
        return py::make_tuple(from_tensor(df.output), comm_dict(df.report));
      },
      py::arg("spec"), py::arg("params"), py::arg("x"));

  m.def(
      "layer_param_count",
      [](std::size_t n, std::size_t mm, std::size_t d, std::size_t d0, std::size_t groups,
         const std::string& variant) {
        return count_dict(zoo::layer_param_count(n, mm, d, d0, groups, zoo::parse_variant(variant)));
      },
      py::arg("n"), py::arg("m"), py::arg("d"), py::arg("d0"), py::arg("groups"),
      py::arg("variant"));
  m.def(
      "model_param_count",
      [](const std::string& arch, const std::string& variant, std::size_t groups) {
        return count_dict(zoo::model_param_count(zoo::preset(arch), zoo::parse_variant(variant), groups));
      },
      py::arg("arch"), py::arg("variant"), py::arg("groups") = 1);

  m.def(
      "verify",
      [](const std::string& suite, std::uint64_t seed) {
        const verify::Report r = verify::run(verify::parse_suite(suite), seed);
        py::list out;
        for (const auto& c : r.checks) {
          out.append(py::dict(py::arg("name") = c.name, py::arg("metric") = c.metric,
                              py::arg("threshold") = c.threshold, py::arg("passed") = c.passed,
                              py::arg("detail") = c.detail));
        }
        return out;
      },
      py::arg("suite") = "all", py::arg("seed") = 1);

  m.def(
      "train_toy",
      [](const std::string& variant, std::size_t groups, std::size_t epochs, std::uint64_t seed,
         bool distributed) {
        const zoo::ArchSpec arch = zoo::build_toy_arch(3, 16, zoo::parse_variant(variant), groups);
        train::Hyper hyper = train::desk_hyper();
        hyper.seed = seed;
        hyper.epochs = epochs;
        train::TrainOptions options;
        options.distributed = distributed;
        train::History h;
        {
          py::gil_scoped_release release;
          h = train::train(arch, train::desk_dataset(), hyper, options);
        }
        py::list out;
        for (const auto& e : h.epochs) {
          out.append(py::dict(py::arg("epoch") = e.epoch, py::arg("lr") = e.lr,
                              py::arg("train_loss") = e.train_loss,
                              py::arg("train_accuracy") = e.train_accuracy,
                              py::arg("test_accuracy") = e.test_accuracy));
        }
        return out;
      },
      py::arg("variant") = "gc2l", py::arg("groups") = 4, py::arg("epochs") = 30,
      py::arg("seed") = 1, py::arg("distributed") = false);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "t2lc");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
