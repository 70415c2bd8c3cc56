#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace shiftadd {

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major N-d tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    // Checked multi-index access.
    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    Tensor reshaped(std::vector<std::size_t> new_shape) const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Geometry of one convolution-like layer. Output dims are derived on
// construction and validated to be >= 1.
struct ConvGeometry {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_rows = 1;
    std::size_t kernel_cols = 1;
    std::size_t stride = 1;
    std::size_t pad_rows = 0;  // per side
    std::size_t pad_cols = 0;  // per side
    std::size_t in_rows = 1;
    std::size_t in_cols = 1;
    std::size_t out_rows = 1;
    std::size_t out_cols = 1;

    static ConvGeometry make(std::size_t c_in, std::size_t c_out, std::size_t kr, std::size_t kc,
                             std::size_t stride, std::size_t pad_r, std::size_t pad_c,
                             std::size_t h_in, std::size_t w_in);

    std::size_t filter_count() const {
        return out_channels * in_channels * kernel_rows * kernel_cols;
    }
    std::vector<std::size_t> input_shape() const { return {in_channels, in_rows, in_cols}; }
    std::vector<std::size_t> output_shape() const { return {out_channels, out_rows, out_cols}; }
    std::vector<std::size_t> filter_shape() const {
        return {out_channels, in_channels, kernel_rows, kernel_cols};
    }

    void check_input(const Tensor& x) const;
};

// Reads x at a logically zero-padded position.
double padded_at(const Tensor& x, const ConvGeometry& g, std::size_t c, std::ptrdiff_t row,
                 std::ptrdiff_t col);

// Patch p with p[c][r][s] == x_padded[c][e*U + r][f*U + s], shape (C_I, R, S).
Tensor extract_patch(const Tensor& x, const ConvGeometry& g, std::size_t e, std::size_t f);

enum class ElementwiseOp { Add, Sub, Mul, Clamp };

Tensor tensor_elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor tensor_clamp(const Tensor& a, double lo, double hi);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace shiftadd
