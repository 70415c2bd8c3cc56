#pragma once

#include <cstdint>
#include <vector>

#include "shiftadd/tensor.hpp"

namespace shiftadd {

// Weights of the L1-distance layer. Masked positions are dead: they
// contribute nothing forward and receive no gradient.
struct AddWeights {
    Tensor values;                    // (C_O, C_I, R, S)
    std::vector<std::uint8_t> mask;   // 1 = active

    static AddWeights of(Tensor w);
    std::size_t size() const { return values.size(); }
    std::size_t unmasked_count() const;
};

struct AddGradients {
    Tensor grad_w;
    Tensor grad_x;
};

enum class PrunePolicy { Random, Magnitude };

// O[c_o][e][f] = -sum |x_patch - w|; stride must be 1.
Tensor add_forward(const Tensor& x, const AddWeights& w, const ConvGeometry& geom);

Tensor hardtanh(const Tensor& t);

// Surrogate rules: grad_w uses the raw difference, grad_x the HardTanh-clipped
// difference. Not the true L1 subgradient.
AddGradients add_backward(const Tensor& x, const AddWeights& w, const Tensor& upstream,
                          const ConvGeometry& geom);

void add_prune(AddWeights& w, double ratio, PrunePolicy policy, std::uint64_t rng_seed);

struct Histogram {
    std::vector<std::size_t> counts;
    double lo = 0.0;
    double hi = 0.0;
};

// Over nonzero unmasked weights only.
Histogram weight_histogram(const AddWeights& w, std::size_t bins);

}  // namespace shiftadd
