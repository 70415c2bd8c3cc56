#pragma once

#include <cstdint>
#include <vector>

#include "shiftadd/tensor.hpp"

namespace shiftadd {

enum class Precision { FP32, FIX32, FIX16, FIX8 };

Precision precision_from_string(const std::string& s);
std::string precision_name(Precision p);
int precision_bits(Precision p);  // 0 for FP32

// Signed fixed point: value = code * 2^scale_exponent.
struct FixedPointFormat {
    int bits = 32;
    int scale_exponent = 0;

    double step() const;
    std::int64_t code_min() const { return -(std::int64_t{1} << (bits - 1)); }
    std::int64_t code_max() const { return (std::int64_t{1} << (bits - 1)) - 1; }
    double range_min() const { return static_cast<double>(code_min()) * step(); }
    double range_max() const { return static_cast<double>(code_max()) * step(); }
};

struct QuantizedTensor {
    FixedPointFormat format;
    std::vector<std::size_t> shape;
    std::vector<std::int64_t> codes;
};

// Smallest k with max|t| <= (2^(bits-1)-1) * 2^k; k = 0 for all-zero input.
FixedPointFormat choose_scale(const Tensor& t, int bits);

// Round-half-to-even, saturating.
QuantizedTensor quantize(const Tensor& t, const FixedPointFormat& fmt);
Tensor dequantize(const QuantizedTensor& q);

// Forward rounds half-to-even; the backward contract is identity (callers
// propagate upstream gradients through unchanged).
double ste_round(double x);

// quantize-dequantize: snaps values onto the format's grid.
Tensor quantize_roundtrip(const Tensor& t, const FixedPointFormat& fmt);

// Convenience: snap with a per-tensor auto-chosen scale. FP32 passes through.
Tensor snap_to_precision(const Tensor& t, Precision p);

}  // namespace shiftadd
