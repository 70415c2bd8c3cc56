#include "shiftadd/shift_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace shiftadd {

namespace {

constexpr double kLn2 = 0.6931471805599453;

std::int8_t project_sign(double latent, double deadzone) {
    if (latent > deadzone) return 1;
    if (latent < -deadzone) return -1;
    return 0;
}

void check_filter(const ShiftWeights& w, const ConvGeometry& g) {
    if (w.shape != g.filter_shape())
        throw GeometryError("shift weights shape " + shape_str(w.shape) +
                            " does not match geometry filter " + shape_str(g.filter_shape()));
}

}  // namespace

std::size_t ShiftWeights::nonzero_count() const {
    return static_cast<std::size_t>(
        std::count_if(signs.begin(), signs.end(), [](std::int8_t s) { return s != 0; }));
}

double ShiftWeights::effective(std::size_t i) const {
    return static_cast<double>(signs[i]) * std::exp2(static_cast<double>(exponents[i]));
}

ShiftWeights shift_init(const ConvGeometry& geom, const ShiftInitConfig& cfg) {
    if (!(cfg.nonzero_fraction > 0.0 && cfg.nonzero_fraction <= 1.0))
        throw ConfigError("shift nonzero_fraction must be in (0, 1]");
    if (cfg.p_min >= 0) throw ConfigError("shift p_min must be negative");

    const std::size_t n = geom.filter_count();
    ShiftWeights w;
    w.shape = geom.filter_shape();
    w.signs.assign(n, 0);
    w.exponents.assign(n, 0);
    w.latent_sign.assign(n, 0.0);
    w.pruned.assign(n, 0);
    w.p_min = cfg.p_min;

    std::mt19937_64 rng(cfg.rng_seed);

    if (cfg.mode == ShiftMode::Fixed) {
        const double mean = static_cast<double>(cfg.p_min) / 2.0;
        const double stddev = std::abs(static_cast<double>(cfg.p_min)) / 4.0;
        std::normal_distribution<double> gauss(mean, stddev);
        for (std::size_t i = 0; i < n; ++i) {
            const double draw = std::nearbyint(gauss(rng));
            w.exponents[i] = static_cast<std::int8_t>(
                std::clamp<long>(static_cast<long>(draw), cfg.p_min, 0));
        }
        const std::size_t keep =
            static_cast<std::size_t>(std::ceil(cfg.nonzero_fraction * static_cast<double>(n)));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::bernoulli_distribution coin(0.5);
        for (std::size_t j = 0; j < keep && j < n; ++j)
            w.signs[order[j]] = coin(rng) ? std::int8_t{1} : std::int8_t{-1};
        for (std::size_t i = 0; i < n; ++i) w.latent_sign[i] = static_cast<double>(w.signs[i]);
        w.sign_deadzone = 0.5;
        w.frozen = true;
    } else {
        std::uniform_int_distribution<int> pdist(cfg.p_min, 0);
        std::uniform_real_distribution<double> latent(-1.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            w.exponents[i] = static_cast<std::int8_t>(pdist(rng));
            w.latent_sign[i] = latent(rng);
        }
        // Deadzone at the (1 - nonzero_fraction) quantile of |latent| keeps
        // exactly ceil(fraction * n) signs alive at init.
        const std::size_t keep =
            static_cast<std::size_t>(std::ceil(cfg.nonzero_fraction * static_cast<double>(n)));
        const std::size_t drop = n - std::min(keep, n);
        if (drop > 0) {
            std::vector<double> mags(n);
            for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(w.latent_sign[i]);
            std::nth_element(mags.begin(), mags.begin() + (drop - 1), mags.end());
            w.sign_deadzone = mags[drop - 1];
        } else {
            w.sign_deadzone = 0.0;
        }
        for (std::size_t i = 0; i < n; ++i)
            w.signs[i] = project_sign(w.latent_sign[i], w.sign_deadzone);
        w.frozen = false;
    }
    return w;
}

Tensor shift_forward(const Tensor& x, const ShiftWeights& w, const ConvGeometry& g) {
    g.check_input(x);
    check_filter(w, g);
    Tensor out(g.output_shape());
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        const std::size_t wbase = co * krs;
        for (std::size_t e = 0; e < g.out_rows; ++e) {
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                double acc = 0.0;
                std::size_t wi = wbase;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
                            if (w.signs[wi] == 0) continue;
                            const double xv = padded_at(
                                x, g, ci, static_cast<std::ptrdiff_t>(e * g.stride + r),
                                static_cast<std::ptrdiff_t>(f * g.stride + s));
                            acc += xv * w.effective(wi);
                        }
                out[(co * g.out_rows + e) * g.out_cols + f] = acc;
            }
        }
    }
    return out;
}

Tensor shift_forward_relaxed(const Tensor& x, const std::vector<std::int8_t>& signs,
                             const std::vector<double>& exponents, const ConvGeometry& g) {
    g.check_input(x);
    if (signs.size() != g.filter_count() || exponents.size() != g.filter_count())
        throw GeometryError("relaxed shift weights size mismatch");
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
                            if (signs[wi] == 0) continue;
                            const double xv = padded_at(
                                x, g, ci, static_cast<std::ptrdiff_t>(e * g.stride + r),
                                static_cast<std::ptrdiff_t>(f * g.stride + s));
                            acc += xv * static_cast<double>(signs[wi]) * std::exp2(exponents[wi]);
                        }
                out[(co * g.out_rows + e) * g.out_cols + f] = acc;
            }
    return out;
}

ShiftGradients shift_backward(const Tensor& x, const ShiftWeights& w, const Tensor& upstream,
                              const ConvGeometry& g) {
    g.check_input(x);
    check_filter(w, g);
    if (upstream.shape() != g.output_shape())
        throw GeometryError("shift upstream shape " + shape_str(upstream.shape()) +
                            " does not match output " + shape_str(g.output_shape()));

    ShiftGradients grads{Tensor(g.filter_shape()), Tensor(g.filter_shape()),
                         Tensor(g.input_shape())};
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        const std::size_t wbase = co * krs;
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                const double u = upstream[(co * g.out_rows + e) * g.out_cols + f];
                if (u == 0.0) continue;
                std::size_t wi = wbase;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
                            if (w.signs[wi] == 0) continue;  // pruned: no update, no flow
                            const std::ptrdiff_t row =
                                static_cast<std::ptrdiff_t>(e * g.stride + r) -
                                static_cast<std::ptrdiff_t>(g.pad_rows);
                            const std::ptrdiff_t col =
                                static_cast<std::ptrdiff_t>(f * g.stride + s) -
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
                            const double w_eff = w.effective(wi);
                            grads.grad_p[wi] += u * xv * w_eff * kLn2;
                            grads.grad_s[wi] +=
                                u * xv * std::exp2(static_cast<double>(w.exponents[wi]));
                            if (inside)
                                grads.grad_x[(ci * g.in_rows + static_cast<std::size_t>(row)) *
                                                 g.in_cols +
                                             static_cast<std::size_t>(col)] += u * w_eff;
                        }
            }
    }
    return grads;
}

void shift_update(ShiftWeights& w, const Tensor& grad_p, const Tensor& grad_s, double lr,
                  double update_threshold) {
    if (w.frozen) throw ConfigError("shift_update called on frozen shift weights");
    if (grad_p.size() != w.size() || grad_s.size() != w.size())
        throw GeometryError("shift gradient size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w.pruned[i]) continue;
        const double g = lr * grad_p[i];
        if (std::abs(g) > update_threshold) {
            const int step = g > 0.0 ? -1 : 1;
            w.exponents[i] = static_cast<std::int8_t>(
                std::clamp<int>(static_cast<int>(w.exponents[i]) + step, w.p_min, 0));
        }
        w.latent_sign[i] -= lr * grad_s[i];
        w.signs[i] = project_sign(w.latent_sign[i], w.sign_deadzone);
    }
}

void shift_prune(ShiftWeights& w, double ratio, std::uint64_t rng_seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("shift prune ratio must be in [0, 1)");
    if (ratio == 0.0) return;
    std::vector<std::size_t> nonzero;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w.signs[i] != 0) nonzero.push_back(i);
    const std::size_t kill = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(nonzero.size())));
    std::mt19937_64 rng(rng_seed);
    std::shuffle(nonzero.begin(), nonzero.end(), rng);
    for (std::size_t j = 0; j < kill; ++j) {
        const std::size_t i = nonzero[j];
        w.signs[i] = 0;
        w.latent_sign[i] = 0.0;
        w.pruned[i] = 1;
    }
}

std::vector<std::int64_t> shift_forward_codes(const std::vector<std::int64_t>& x_codes,
                                              const ShiftWeights& w, const ConvGeometry& g) {
    if (x_codes.size() != g.in_channels * g.in_rows * g.in_cols)
        throw GeometryError("input code count does not match geometry");
    check_filter(w, g);
    std::vector<std::int64_t> out(g.out_channels * g.out_rows * g.out_cols, 0);
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                std::int64_t acc = 0;  // scale 2^(k + p_min)
                std::size_t wi = co * krs;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
                            if (w.signs[wi] == 0) continue;
                            const std::ptrdiff_t row =
                                static_cast<std::ptrdiff_t>(e * g.stride + r) -
                                static_cast<std::ptrdiff_t>(g.pad_rows);
                            const std::ptrdiff_t col =
                                static_cast<std::ptrdiff_t>(f * g.stride + s) -
                                static_cast<std::ptrdiff_t>(g.pad_cols);
                            if (row < 0 || col < 0 ||
                                row >= static_cast<std::ptrdiff_t>(g.in_rows) ||
                                col >= static_cast<std::ptrdiff_t>(g.in_cols))
                                continue;
                            const std::int64_t code =
                                x_codes[(ci * g.in_rows + static_cast<std::size_t>(row)) *
                                            g.in_cols +
                                        static_cast<std::size_t>(col)];
                            const int shift_amount = static_cast<int>(w.exponents[wi]) - w.p_min;
                            const std::int64_t term = code << shift_amount;
                            acc += w.signs[wi] > 0 ? term : -term;
                        }
                out[(co * g.out_rows + e) * g.out_cols + f] = acc;
            }
    return out;
}

}  // namespace shiftadd
