#include "shiftadd/add_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace shiftadd {

namespace {

void check_filter(const AddWeights& w, const ConvGeometry& g) {
    if (w.values.shape() != g.filter_shape())
        throw GeometryError("add weights shape " + shape_str(w.values.shape()) +
                            " does not match geometry filter " + shape_str(g.filter_shape()));
    if (g.stride != 1) throw GeometryError("add layer stride must be 1");
}

}  // namespace

AddWeights AddWeights::of(Tensor w) {
    AddWeights a;
    a.mask.assign(w.size(), 1);
    a.values = std::move(w);
    return a;
}

std::size_t AddWeights::unmasked_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Tensor add_forward(const Tensor& x, const AddWeights& w, const ConvGeometry& g) {
    g.check_input(x);
    check_filter(w, g);
    Tensor out(g.output_shape());
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                double acc = 0.0;
                std::size_t wi = co * krs;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
                            if (!w.mask[wi]) continue;
                            const double xv =
                                padded_at(x, g, ci, static_cast<std::ptrdiff_t>(e + r),
                                          static_cast<std::ptrdiff_t>(f + s));
                            acc -= std::abs(xv - w.values[wi]);
                        }
                out[(co * g.out_rows + e) * g.out_cols + f] = acc;
            }
    return out;
}

Tensor hardtanh(const Tensor& t) { return tensor_clamp(t, -1.0, 1.0); }

AddGradients add_backward(const Tensor& x, const AddWeights& w, const Tensor& upstream,
                          const ConvGeometry& g) {
    g.check_input(x);
    check_filter(w, g);
    if (upstream.shape() != g.output_shape())
        throw GeometryError("add upstream shape " + shape_str(upstream.shape()) +
                            " does not match output " + shape_str(g.output_shape()));

    AddGradients grads{Tensor(g.filter_shape()), Tensor(g.input_shape())};
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                const double u = upstream[(co * g.out_rows + e) * g.out_cols + f];
                std::size_t wi = co * krs;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
                            if (!w.mask[wi]) continue;
                            const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(e + r) -
                                                       static_cast<std::ptrdiff_t>(g.pad_rows);
                            const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(f + s) -
                                                       static_cast<std::ptrdiff_t>(g.pad_cols);
                            const bool inside =
                                row >= 0 && col >= 0 &&
                                row < static_cast<std::ptrdiff_t>(g.in_rows) &&
                                col < static_cast<std::ptrdiff_t>(g.in_cols);
                            const double xv =
                                inside ? x[(ci * g.in_rows + static_cast<std::size_t>(row)) *
                                               g.in_cols +
                                           static_cast<std::size_t>(col)]
                                       : 0.0;
                            const double diff = xv - w.values[wi];
                            grads.grad_w[wi] += u * diff;
                            if (inside)
                                grads.grad_x[(ci * g.in_rows + static_cast<std::size_t>(row)) *
                                                 g.in_cols +
                                             static_cast<std::size_t>(col)] +=
                                    u * std::clamp(diff, -1.0, 1.0);
                        }
            }
    return grads;
}

void add_prune(AddWeights& w, double ratio, PrunePolicy policy, std::uint64_t rng_seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("add prune ratio must be in [0, 1)");
    if (ratio == 0.0) return;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w.mask[i]) active.push_back(i);
    const std::size_t kill = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(active.size())));
    if (policy == PrunePolicy::Magnitude) {
        std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(w.values[a]) < std::abs(w.values[b]);
        });
    } else {
        std::mt19937_64 rng(rng_seed);
        std::shuffle(active.begin(), active.end(), rng);
    }
    for (std::size_t j = 0; j < kill; ++j) w.mask[active[j]] = 0;
}

Histogram weight_histogram(const AddWeights& w, std::size_t bins) {
    if (bins < 1) throw ConfigError("histogram needs bins >= 1");
    std::vector<double> vals;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w.mask[i] && w.values[i] != 0.0) vals.push_back(w.values[i]);
    if (vals.empty()) throw ConfigError("weight_histogram: no unmasked nonzero weights");
    Histogram h;
    h.lo = *std::min_element(vals.begin(), vals.end());
    h.hi = *std::max_element(vals.begin(), vals.end());
    h.counts.assign(bins, 0);
    const double width = h.hi - h.lo;
    for (double v : vals) {
        std::size_t b = width == 0.0 ? 0
                                     : std::min(bins - 1, static_cast<std::size_t>(
                                                              (v - h.lo) / width *
                                                              static_cast<double>(bins)));
        ++h.counts[b];
    }
    return h;
}

}  // namespace shiftadd
