#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "shiftadd/quantize.hpp"
#include "shiftadd/tensor.hpp"

namespace shiftadd {

// Weights of a bit-shift convolution: w = s * 2^p with s in {-1,0,+1} and
// integer p in [p_min, 0]. latent_sign drives the ternary sign during
// training; pruned positions never come back.
struct ShiftWeights {
    std::vector<std::int8_t> signs;      // flat (C_O, C_I, R, S)
    std::vector<std::int8_t> exponents;  // same layout, each in [p_min, 0]
    std::vector<double> latent_sign;
    std::vector<std::uint8_t> pruned;
    std::vector<std::size_t> shape;  // (C_O, C_I, R, S)
    int p_min = -7;
    double sign_deadzone = 0.0;
    bool frozen = false;

    std::size_t size() const { return signs.size(); }
    std::size_t nonzero_count() const;
    double effective(std::size_t i) const;  // s * 2^p
};

enum class ShiftMode { Fixed, Learnable };

struct ShiftInitConfig {
    int p_min = -7;
    double nonzero_fraction = 0.5;
    ShiftMode mode = ShiftMode::Learnable;
    std::uint64_t rng_seed = 0;
};

struct ShiftGradients {
    Tensor grad_p;  // filter shape
    Tensor grad_s;  // filter shape
    Tensor grad_x;  // input shape
};

ShiftWeights shift_init(const ConvGeometry& geom, const ShiftInitConfig& cfg);

Tensor shift_forward(const Tensor& x, const ShiftWeights& w, const ConvGeometry& geom);

// upstream already carries dO_a/dO_s from the downstream add layer.
ShiftGradients shift_backward(const Tensor& x, const ShiftWeights& w, const Tensor& upstream,
                              const ConvGeometry& geom);

// Integer update: p steps by one against the gradient sign when |lr*g|
// exceeds the threshold; no latent exponent accumulator is kept.
void shift_update(ShiftWeights& w, const Tensor& grad_p, const Tensor& grad_s, double lr,
                  double update_threshold = 0.5);

// Permanently zero a ratio-fraction of the currently nonzero positions.
void shift_prune(ShiftWeights& w, double ratio, std::uint64_t rng_seed);

// Continuous relaxation used by gradient checks: forward with real-valued
// exponents (exact 2^p), same accumulation order as shift_forward.
Tensor shift_forward_relaxed(const Tensor& x, const std::vector<std::int8_t>& signs,
                             const std::vector<double>& exponents, const ConvGeometry& geom);

// Fixed-point path: input codes at scale 2^k, output accumulated in int64 at
// scale 2^(k + p_min). Multiplication-free (sign flip + left shift).
std::vector<std::int64_t> shift_forward_codes(const std::vector<std::int64_t>& x_codes,
                                              const ShiftWeights& w, const ConvGeometry& geom);

}  // namespace shiftadd
