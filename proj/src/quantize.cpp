#include "shiftadd/quantize.hpp"

#include <cmath>

namespace shiftadd {

Precision precision_from_string(const std::string& s) {
    if (s == "fp32") return Precision::FP32;
    if (s == "fix32") return Precision::FIX32;
    if (s == "fix16") return Precision::FIX16;
    if (s == "fix8") return Precision::FIX8;
    throw ConfigError("unknown precision '" + s + "' (expected fp32|fix32|fix16|fix8)");
}

std::string precision_name(Precision p) {
    switch (p) {
        case Precision::FP32: return "fp32";
        case Precision::FIX32: return "fix32";
        case Precision::FIX16: return "fix16";
        case Precision::FIX8: return "fix8";
    }
    return "?";
}

int precision_bits(Precision p) {
    switch (p) {
        case Precision::FP32: return 0;
        case Precision::FIX32: return 32;
        case Precision::FIX16: return 16;
        case Precision::FIX8: return 8;
    }
    return 0;
}

double FixedPointFormat::step() const { return std::exp2(scale_exponent); }

namespace {

void check_bits(int bits) {
    if (bits != 8 && bits != 16 && bits != 32)
        throw ConfigError("fixed-point bits must be 8, 16 or 32");
}

void check_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) throw NumericError("non-finite value in tensor");
}

}  // namespace

FixedPointFormat choose_scale(const Tensor& t, int bits) {
    check_bits(bits);
    if (t.size() == 0) throw GeometryError("choose_scale on empty tensor");
    check_finite(t);
    double amax = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) amax = std::max(amax, std::abs(t[i]));
    FixedPointFormat fmt{bits, 0};
    if (amax == 0.0) return fmt;
    const double cmax = static_cast<double>(fmt.code_max());
    // smallest k with amax <= cmax * 2^k
    int k = static_cast<int>(std::ceil(std::log2(amax / cmax)));
    while (k > -1000 && amax <= cmax * std::exp2(k - 1)) --k;
    while (amax > cmax * std::exp2(k)) ++k;
    fmt.scale_exponent = std::max(k, -1000);
    return fmt;
}

QuantizedTensor quantize(const Tensor& t, const FixedPointFormat& fmt) {
    check_bits(fmt.bits);
    check_finite(t);
    QuantizedTensor q;
    q.format = fmt;
    q.shape = t.shape();
    q.codes.resize(t.size());
    const double inv_step = std::exp2(-fmt.scale_exponent);
    const double lo = static_cast<double>(fmt.code_min());
    const double hi = static_cast<double>(fmt.code_max());
    for (std::size_t i = 0; i < t.size(); ++i) {
        double c = std::nearbyint(t[i] * inv_step);  // default FE_TONEAREST = half to even
        c = std::min(std::max(c, lo), hi);
        q.codes[i] = static_cast<std::int64_t>(c);
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t(q.shape);
    const double step = q.format.step();
    for (std::size_t i = 0; i < q.codes.size(); ++i)
        t[i] = static_cast<double>(q.codes[i]) * step;
    return t;
}

double ste_round(double x) { return std::nearbyint(x); }

Tensor quantize_roundtrip(const Tensor& t, const FixedPointFormat& fmt) {
    return dequantize(quantize(t, fmt));
}

Tensor snap_to_precision(const Tensor& t, Precision p) {
    if (p == Precision::FP32) return t;
    const int bits = precision_bits(p);
    return quantize_roundtrip(t, choose_scale(t, bits));
}

}  // namespace shiftadd
