#include "shiftadd/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace shiftadd {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw GeometryError("tensor shape has zero dimension");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw GeometryError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw GeometryError("tensor dim index out of range");
    return shape_[i];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
        throw GeometryError("index rank " + std::to_string(idx.size()) +
                            " does not match tensor rank " + std::to_string(shape_.size()));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis])
            throw GeometryError("index " + std::to_string(i) + " out of range for axis " +
                                std::to_string(axis) + " of " + shape_str(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_product(new_shape) != data_.size())
        throw GeometryError("reshape to " + shape_str(new_shape) + " changes element count");
    return Tensor(std::move(new_shape), data_);
}

ConvGeometry ConvGeometry::make(std::size_t c_in, std::size_t c_out, std::size_t kr,
                                std::size_t kc, std::size_t stride, std::size_t pad_r,
                                std::size_t pad_c, std::size_t h_in, std::size_t w_in) {
    if (c_in < 1 || c_out < 1 || kr < 1 || kc < 1 || stride < 1)
        throw GeometryError("conv geometry requires positive channels, kernel and stride");
    if (h_in + 2 * pad_r < kr || w_in + 2 * pad_c < kc)
        throw GeometryError("kernel larger than padded input");
    ConvGeometry g;
    g.in_channels = c_in;
    g.out_channels = c_out;
    g.kernel_rows = kr;
    g.kernel_cols = kc;
    g.stride = stride;
    g.pad_rows = pad_r;
    g.pad_cols = pad_c;
    g.in_rows = h_in;
    g.in_cols = w_in;
    g.out_rows = (h_in + 2 * pad_r - kr) / stride + 1;
    g.out_cols = (w_in + 2 * pad_c - kc) / stride + 1;
    return g;
}

void ConvGeometry::check_input(const Tensor& x) const {
    if (x.shape() != input_shape())
        throw GeometryError("input shape " + shape_str(x.shape()) +
                            " does not match geometry input " + shape_str(input_shape()));
}

double padded_at(const Tensor& x, const ConvGeometry& g, std::size_t c, std::ptrdiff_t row,
                 std::ptrdiff_t col) {
    const std::ptrdiff_t r = row - static_cast<std::ptrdiff_t>(g.pad_rows);
    const std::ptrdiff_t s = col - static_cast<std::ptrdiff_t>(g.pad_cols);
    if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(g.in_rows) ||
        s >= static_cast<std::ptrdiff_t>(g.in_cols))
        return 0.0;
    return x[(c * g.in_rows + static_cast<std::size_t>(r)) * g.in_cols +
             static_cast<std::size_t>(s)];
}

Tensor extract_patch(const Tensor& x, const ConvGeometry& g, std::size_t e, std::size_t f) {
    g.check_input(x);
    if (e >= g.out_rows || f >= g.out_cols)
        throw GeometryError("patch position (" + std::to_string(e) + "," + std::to_string(f) +
                            ") outside output grid");
    Tensor p({g.in_channels, g.kernel_rows, g.kernel_cols});
    std::size_t o = 0;
    for (std::size_t c = 0; c < g.in_channels; ++c)
        for (std::size_t r = 0; r < g.kernel_rows; ++r)
            for (std::size_t s = 0; s < g.kernel_cols; ++s)
                p[o++] = padded_at(x, g, c, static_cast<std::ptrdiff_t>(e * g.stride + r),
                                   static_cast<std::ptrdiff_t>(f * g.stride + s));
    return p;
}

Tensor tensor_elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw GeometryError("elementwise shapes differ: " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        switch (op) {
            case ElementwiseOp::Add: out[i] = a[i] + b[i]; break;
            case ElementwiseOp::Sub: out[i] = a[i] - b[i]; break;
            case ElementwiseOp::Mul: out[i] = a[i] * b[i]; break;
            case ElementwiseOp::Clamp:
                out[i] = std::min(std::max(a[i], -b[i]), b[i]);
                break;
        }
    }
    return out;
}

Tensor tensor_clamp(const Tensor& a, double lo, double hi) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(std::max(a[i], lo), hi);
    return out;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

}  // namespace shiftadd
