// Python bindings: numpy-facing wrappers over the multiplication-free
// kernels, quantizer, energy model, and the training loop.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shiftadd/add_layer.hpp"
#include "shiftadd/energy.hpp"
#include "shiftadd/io.hpp"
#include "shiftadd/network.hpp"
#include "shiftadd/quantize.hpp"
#include "shiftadd/shift_layer.hpp"
#include "shiftadd/tensor.hpp"
#include "shiftadd/trainer.hpp"

namespace py = pybind11;
using namespace shiftadd;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

ConvGeometry geom_for(const Tensor& x, std::size_t out_channels, std::size_t kernel,
                      std::size_t stride, std::size_t pad) {
    if (x.rank() != 3) throw GeometryError("expected input of shape (C, H, W)");
    return ConvGeometry::make(x.shape()[0], out_channels, kernel, kernel, stride, pad, pad,
                              x.shape()[1], x.shape()[2]);
}

Precision precision_arg(const std::string& s) { return precision_from_string(s); }

}  // namespace

PYBIND11_MODULE(_shiftadd, m) {
    m.doc() = "multiplication-free shift/add network kernels";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    // ---- quantizer ----
    m.def(
        "snap",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const std::string& precision) {
            return array_from_tensor(
                snap_to_precision(tensor_from_array(a), precision_arg(precision)));
        },
        py::arg("array"), py::arg("precision"),
        "Quantize-dequantize onto the fixed-point grid of the given precision "
        "('fp32' passes through). The scale is chosen per tensor.");

    m.def(
        "choose_scale",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a, int bits) {
            const auto fmt = choose_scale(tensor_from_array(a), bits);
            return py::make_tuple(fmt.bits, fmt.scale_exponent);
        },
        py::arg("array"), py::arg("bits"),
        "Smallest power-of-two scale whose range covers the tensor; returns "
        "(bits, scale_exponent).");

    // ---- shift layer ----
    py::class_<ShiftWeights>(m, "ShiftWeights")
        .def_property_readonly("signs",
                               [](const ShiftWeights& w) {
                                   std::vector<py::ssize_t> shape(w.shape.begin(), w.shape.end());
                                   py::array_t<std::int8_t> a(shape);
                                   std::copy(w.signs.begin(), w.signs.end(), a.mutable_data());
                                   return a;
                               })
        .def_property_readonly("exponents",
                               [](const ShiftWeights& w) {
                                   std::vector<py::ssize_t> shape(w.shape.begin(), w.shape.end());
                                   py::array_t<std::int8_t> a(shape);
                                   std::copy(w.exponents.begin(), w.exponents.end(),
                                             a.mutable_data());
                                   return a;
                               })
        .def_property_readonly("effective",
                               [](const ShiftWeights& w) {
                                   std::vector<py::ssize_t> shape(w.shape.begin(), w.shape.end());
                                   py::array_t<double> a(shape);
                                   for (std::size_t i = 0; i < w.size(); ++i)
                                       a.mutable_data()[i] = w.effective(i);
                                   return a;
                               })
        .def_property_readonly("p_min", [](const ShiftWeights& w) { return w.p_min; })
        .def("nonzero_count", &ShiftWeights::nonzero_count);

    m.def(
        "shift_init",
        [](std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int p_min,
           double nonzero_fraction, std::uint64_t seed) {
            const auto g = ConvGeometry::make(in_channels, out_channels, kernel, kernel, 1, 0, 0,
                                              kernel, kernel);
            ShiftInitConfig cfg;
            cfg.p_min = p_min;
            cfg.nonzero_fraction = nonzero_fraction;
            cfg.rng_seed = seed;
            return shift_init(g, cfg);
        },
        py::arg("in_channels"), py::arg("out_channels"), py::arg("kernel"),
        py::arg("p_min") = -7, py::arg("nonzero_fraction") = 0.5, py::arg("seed") = 0);

    m.def(
        "shift_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const ShiftWeights& w, std::size_t stride, std::size_t pad) {
            const Tensor xt = tensor_from_array(x);
            const auto g = geom_for(xt, w.shape[0], w.shape[2], stride, pad);
            return array_from_tensor(shift_forward(xt, w, g));
        },
        py::arg("x"), py::arg("weights"), py::arg("stride") = 1, py::arg("pad") = 0,
        "Bit-shift convolution of a (C, H, W) input; weights are s * 2**p.");

    m.def(
        "shift_backward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const ShiftWeights& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& upstream,
           std::size_t stride, std::size_t pad) {
            const Tensor xt = tensor_from_array(x);
            const auto g = geom_for(xt, w.shape[0], w.shape[2], stride, pad);
            const auto grads = shift_backward(xt, w, tensor_from_array(upstream), g);
            return py::make_tuple(array_from_tensor(grads.grad_p), array_from_tensor(grads.grad_s),
                                  array_from_tensor(grads.grad_x));
        },
        py::arg("x"), py::arg("weights"), py::arg("upstream"), py::arg("stride") = 1,
        py::arg("pad") = 0, "Returns (grad_p, grad_s, grad_x).");

    // ---- add layer ----
    m.def(
        "add_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
           std::size_t pad) {
            const Tensor xt = tensor_from_array(x);
            const Tensor wt = tensor_from_array(w);
            if (wt.rank() != 4) throw GeometryError("weights must be (C_O, C_I, R, S)");
            const auto g = geom_for(xt, wt.shape()[0], wt.shape()[2], 1, pad);
            return array_from_tensor(add_forward(xt, AddWeights::of(wt), g));
        },
        py::arg("x"), py::arg("weights"), py::arg("pad") = 0,
        "Negative-L1-distance convolution; output is never positive.");

    m.def(
        "add_backward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& upstream,
           std::size_t pad) {
            const Tensor xt = tensor_from_array(x);
            const Tensor wt = tensor_from_array(w);
            if (wt.rank() != 4) throw GeometryError("weights must be (C_O, C_I, R, S)");
            const auto g = geom_for(xt, wt.shape()[0], wt.shape()[2], 1, pad);
            const auto grads = add_backward(xt, AddWeights::of(wt), tensor_from_array(upstream), g);
            return py::make_tuple(array_from_tensor(grads.grad_w), array_from_tensor(grads.grad_x));
        },
        py::arg("x"), py::arg("weights"), py::arg("upstream"), py::arg("pad") = 0,
        "Returns (grad_w, grad_x) under the raw-difference / clipped-difference rules.");

    // ---- energy ----
    m.def(
        "unit_energy",
        [](const std::string& op, const std::string& format, const std::string& platform) {
            EnergyOp eop;
            if (op == "mult") eop = EnergyOp::Mult;
            else if (op == "add") eop = EnergyOp::Add;
            else if (op == "shift") eop = EnergyOp::Shift;
            else throw ConfigError("unknown op '" + op + "' (mult|add|shift)");
            EnergyFormat ef;
            if (format == "fp32") ef = EnergyFormat::FP32;
            else if (format == "fix32") ef = EnergyFormat::FIX32;
            else if (format == "fix16") ef = EnergyFormat::FIX16;
            else if (format == "fix8") ef = EnergyFormat::FIX8;
            else throw ConfigError("unknown format '" + format + "'");
            return EnergyTable::defaults().unit_energy(eop, ef, platform_from_string(platform));
        },
        py::arg("op"), py::arg("format"), py::arg("platform") = "asic",
        "Unit energy in picojoules for one arithmetic operation.");

    // ---- whole-model training ----
    m.def(
        "train",
        [](const std::string& arch_text, const std::string& dataset_spec, double test_fraction,
           std::size_t epochs, std::size_t batch_size, double lr, const std::string& precision,
           bool freeze_shift, std::uint64_t seed) {
            const ArchConfig arch = parse_arch_text(arch_text);
            const Dataset all = load_dataset(dataset_spec);
            auto [train_set, test_set] = split_dataset(all, test_fraction, seed);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.base_lr = lr;
            cfg.precision = precision_arg(precision);
            cfg.freeze_shift = freeze_shift;
            cfg.seed = seed;
            auto [model, record] =
                train(build_model(arch, seed, cfg.precision, freeze_shift), train_set, test_set,
                      cfg);
            py::list epochs_out;
            for (const auto& e : record.epochs) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["train_loss"] = e.train_loss;
                d["train_acc"] = e.train_acc;
                d["test_loss"] = e.test_loss;
                d["test_acc"] = e.test_acc;
                d["cumulative_joules"] = e.cumulative_joules;
                epochs_out.append(d);
            }
            py::dict out;
            out["config_hash"] = record.config_hash;
            out["seed"] = record.seed;
            out["energy_substituted"] = record.energy_substituted;
            out["epochs"] = epochs_out;
            out["parameter_count"] = model.parameter_count();
            return out;
        },
        py::arg("arch_text"), py::arg("dataset_spec"), py::arg("test_fraction") = 0.25,
        py::arg("epochs") = 5, py::arg("batch_size") = 32, py::arg("lr") = 0.01,
        py::arg("precision") = "fp32", py::arg("freeze_shift") = false, py::arg("seed") = 0,
        "Train a model described by an architecture text on a dataset spec; "
        "returns the per-epoch record as a dict.");
}
