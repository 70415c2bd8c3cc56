#include "shiftadd/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace shiftadd {

namespace {

// splitmix64: decorrelates per-layer seeds from the run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor he_normal(const std::vector<std::size_t>& shape, std::size_t fan_in,
                 std::uint64_t seed) {
    Tensor t(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Tensor sample_of(const Tensor& batch, std::size_t n) {
    const auto& s = batch.shape();
    const std::size_t sz = batch.size() / s[0];
    Tensor out(std::vector<std::size_t>(s.begin() + 1, s.end()));
    std::copy_n(batch.data() + n * sz, sz, out.data());
    return out;
}

void set_sample(Tensor& batch, std::size_t n, const Tensor& v) {
    const std::size_t sz = batch.size() / batch.shape()[0];
    std::copy_n(v.data(), sz, batch.data() + n * sz);
}

bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

std::size_t head_pad(std::size_t kernel) { return (kernel - 1) / 2; }

}  // namespace

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::ShiftAdd: return "shiftadd";
        case LayerKind::ShiftOnly: return "shift_only";
        case LayerKind::AddOnly: return "add_only";
        case LayerKind::MultConv: return "mult_conv";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::ReLU: return "relu";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::LinearShiftAdd: return "linear_shiftadd";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (LayerKind k :
         {LayerKind::ShiftAdd, LayerKind::ShiftOnly, LayerKind::AddOnly, LayerKind::MultConv,
          LayerKind::BatchNorm, LayerKind::ReLU, LayerKind::AvgPool, LayerKind::LinearShiftAdd})
        if (layer_kind_name(k) == s) return k;
    throw ConfigError("unknown layer kind '" + s + "'");
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) {
        if (const auto* sl = std::get_if<ShiftLayerState>(&layer.state))
            n += sl->weights.size();
        else if (const auto* al = std::get_if<AddLayerState>(&layer.state))
            n += al->weights.size();
        else if (const auto* cl = std::get_if<ConvLayerState>(&layer.state))
            n += cl->weights.size();
        else if (const auto* bn = std::get_if<BatchNormState>(&layer.state))
            n += 2 * bn->channels;
    }
    return n;
}

std::size_t Model::parameter_bytes() const {
    std::size_t width = 4;
    switch (precision) {
        case Precision::FP32:
        case Precision::FIX32: width = 4; break;
        case Precision::FIX16: width = 2; break;
        case Precision::FIX8: width = 1; break;
    }
    return parameter_count() * width;
}

std::string Model::summary() const {
    std::ostringstream os;
    os << "model precision=" << precision_name(precision) << " seed=" << seed
       << " freeze_shift=" << (freeze_shift ? "true" : "false") << "\n";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        os << "  [" << i << "] " << layers[i].name;
        if (const auto* sl = std::get_if<ShiftLayerState>(&layers[i].state))
            os << " " << shape_str(sl->geom.input_shape()) << " -> "
               << shape_str(sl->geom.output_shape())
               << " nonzero=" << sl->weights.nonzero_count() << "/" << sl->weights.size()
               << " deadzone=" << sl->weights.sign_deadzone
               << (sl->weights.frozen ? " frozen" : "");
        else if (const auto* al = std::get_if<AddLayerState>(&layers[i].state))
            os << " " << shape_str(al->geom.input_shape()) << " -> "
               << shape_str(al->geom.output_shape()) << " active=" << al->weights.unmasked_count()
               << "/" << al->weights.size();
        else if (const auto* cl = std::get_if<ConvLayerState>(&layers[i].state))
            os << " " << shape_str(cl->geom.input_shape()) << " -> "
               << shape_str(cl->geom.output_shape());
        else if (const auto* bn = std::get_if<BatchNormState>(&layers[i].state))
            os << " channels=" << bn->channels;
        else if (const auto* ap = std::get_if<AvgPoolState>(&layers[i].state))
            os << " window=" << (ap->window == 0 ? std::string("global")
                                                 : std::to_string(ap->window));
        os << "\n";
    }
    os << "  parameters=" << parameter_count() << " (" << parameter_bytes() << " bytes at "
       << precision_name(precision) << ")\n";
    return os.str();
}

Model build_model(const ArchConfig& arch, std::uint64_t seed, Precision precision,
                  bool freeze_shift) {
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");
    Model m;
    m.arch = arch;
    m.precision = precision;
    m.seed = seed;
    m.freeze_shift = freeze_shift;

    std::size_t c = arch.in_channels, h = arch.in_rows, w = arch.in_cols;
    std::size_t salt = 0;

    auto add_shift = [&](std::size_t out, std::size_t kernel, std::size_t stride,
                         std::size_t pad, std::size_t spec_idx) {
        ConvGeometry g = ConvGeometry::make(c, out, kernel, kernel, stride, pad, pad, h, w);
        ShiftInitConfig cfg;
        cfg.p_min = arch.shift_p_min;
        cfg.nonzero_fraction = arch.shift_nonzero_fraction;
        cfg.mode = arch.shift_mode;
        cfg.rng_seed = mix_seed(seed, salt++);
        ShiftWeights sw = shift_init(g, cfg);
        if (freeze_shift) sw.frozen = true;
        m.layers.push_back({"shift" + std::to_string(spec_idx), spec_idx,
                            ShiftLayerState{g, std::move(sw)}});
        c = g.out_channels;
        h = g.out_rows;
        w = g.out_cols;
    };
    auto add_add = [&](std::size_t out, std::size_t kernel, std::size_t spec_idx) {
        const std::size_t pad = head_pad(kernel);
        ConvGeometry g = ConvGeometry::make(c, out, kernel, kernel, 1, pad, pad, h, w);
        AddWeights aw = AddWeights::of(
            he_normal(g.filter_shape(), c * kernel * kernel, mix_seed(seed, salt++)));
        m.layers.push_back({"add" + std::to_string(spec_idx), spec_idx,
                            AddLayerState{g, std::move(aw)}});
        c = g.out_channels;
        h = g.out_rows;
        w = g.out_cols;
    };
    auto add_bn = [&](std::size_t spec_idx) {
        BatchNormState bn;
        bn.channels = c;
        bn.gamma = Tensor::full({c}, 1.0);
        bn.beta = Tensor::zeros({c});
        bn.running_mean = Tensor::zeros({c});
        bn.running_var = Tensor::full({c}, 1.0);
        m.layers.push_back({"bn" + std::to_string(spec_idx), spec_idx, std::move(bn)});
    };

    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& spec = arch.layers[i];
        try {
            switch (spec.kind) {
                case LayerKind::ShiftAdd:
                    add_shift(spec.out_channels, spec.kernel, spec.stride, spec.pad, i);
                    add_bn(i);
                    add_add(c, spec.kernel, i);
                    add_bn(i);
                    break;
                case LayerKind::ShiftOnly:
                    add_shift(spec.out_channels, spec.kernel, spec.stride, spec.pad, i);
                    add_bn(i);
                    break;
                case LayerKind::AddOnly:
                    if (spec.stride != 1)
                        throw ConfigError("add_only layers require stride 1");
                    {
                        ConvGeometry g = ConvGeometry::make(c, spec.out_channels, spec.kernel,
                                                            spec.kernel, 1, spec.pad, spec.pad,
                                                            h, w);
                        AddWeights aw = AddWeights::of(he_normal(
                            g.filter_shape(), c * spec.kernel * spec.kernel,
                            mix_seed(seed, salt++)));
                        m.layers.push_back({"add" + std::to_string(i), i,
                                            AddLayerState{g, std::move(aw)}});
                        c = g.out_channels;
                        h = g.out_rows;
                        w = g.out_cols;
                    }
                    add_bn(i);
                    break;
                case LayerKind::MultConv: {
                    ConvGeometry g = ConvGeometry::make(c, spec.out_channels, spec.kernel,
                                                        spec.kernel, spec.stride, spec.pad,
                                                        spec.pad, h, w);
                    Tensor cw = he_normal(g.filter_shape(), c * spec.kernel * spec.kernel,
                                          mix_seed(seed, salt++));
                    m.layers.push_back({"conv" + std::to_string(i), i,
                                        ConvLayerState{g, std::move(cw)}});
                    c = g.out_channels;
                    h = g.out_rows;
                    w = g.out_cols;
                    add_bn(i);
                    break;
                }
                case LayerKind::BatchNorm: add_bn(i); break;
                case LayerKind::ReLU:
                    m.layers.push_back({"relu" + std::to_string(i), i, ReluState{}});
                    break;
                case LayerKind::AvgPool: {
                    AvgPoolState ap;
                    ap.window = spec.pool;
                    ap.channels = c;
                    ap.in_rows = h;
                    ap.in_cols = w;
                    if (ap.window == 0) {
                        ap.out_rows = ap.out_cols = 1;
                    } else {
                        if (h % ap.window || w % ap.window)
                            throw ConfigError("avgpool window does not divide spatial dims");
                        ap.out_rows = h / ap.window;
                        ap.out_cols = w / ap.window;
                    }
                    h = ap.out_rows;
                    w = ap.out_cols;
                    m.layers.push_back({"avgpool" + std::to_string(i), i, std::move(ap)});
                    break;
                }
                case LayerKind::LinearShiftAdd:
                    // classifier head: 1x1 shift + 1x1 add, no normalization on logits
                    add_shift(arch.classes, 1, 1, 0, i);
                    add_add(arch.classes, 1, i);
                    break;
            }
        } catch (const std::exception& e) {
            throw ConfigError("layer " + std::to_string(i) + " (" +
                              layer_kind_name(spec.kind) + "): " + e.what());
        }
    }
    if (h != 1 || w != 1 || c != arch.classes)
        throw ConfigError("architecture output is " + shape_str({c, h, w}) + ", expected " +
                          shape_str({arch.classes, 1, 1}) +
                          " (end with avgpool + linear_shiftadd or a 1x1 head)");
    return m;
}

namespace {

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
    Tensor out(g.output_shape());
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                double acc = 0.0;
                std::size_t wi = co * krs;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi)
                            acc += padded_at(x, g, ci,
                                             static_cast<std::ptrdiff_t>(e * g.stride + r),
                                             static_cast<std::ptrdiff_t>(f * g.stride + s)) *
                                   w[wi];
                out[(co * g.out_rows + e) * g.out_cols + f] = acc;
            }
    return out;
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& upstream,
                   const ConvGeometry& g, Tensor& grad_w, Tensor& grad_x) {
    const std::size_t krs = g.in_channels * g.kernel_rows * g.kernel_cols;
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t e = 0; e < g.out_rows; ++e)
            for (std::size_t f = 0; f < g.out_cols; ++f) {
                const double u = upstream[(co * g.out_rows + e) * g.out_cols + f];
                if (u == 0.0) continue;
                std::size_t wi = co * krs;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t r = 0; r < g.kernel_rows; ++r)
                        for (std::size_t s = 0; s < g.kernel_cols; ++s, ++wi) {
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
                            const std::size_t xo =
                                (ci * g.in_rows + static_cast<std::size_t>(row)) * g.in_cols +
                                static_cast<std::size_t>(col);
                            grad_w[wi] += u * x[xo];
                            grad_x[xo] += u * w[wi];
                        }
            }
}

}  // namespace

Tensor model_forward(Model& m, const Tensor& batch, ForwardCache* cache, bool training) {
    if (batch.rank() != 4)
        throw GeometryError("model_forward expects a (N,C,H,W) batch, got " +
                            shape_str(batch.shape()));
    const std::size_t n = batch.dim(0);
    if (batch.dim(1) != m.arch.in_channels || batch.dim(2) != m.arch.in_rows ||
        batch.dim(3) != m.arch.in_cols)
        throw GeometryError("batch shape " + shape_str(batch.shape()) +
                            " does not match model input (" +
                            shape_str({m.arch.in_channels, m.arch.in_rows, m.arch.in_cols}) +
                            ")");
    if (cache) {
        cache->inputs.assign(m.layers.size(), Tensor());
        cache->bn_invstd.assign(m.layers.size(), Tensor());
        cache->bn_mean.assign(m.layers.size(), Tensor());
        cache->training = training;
        cache->first_nonfinite_layer = -1;
    }

    Tensor cur = batch;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        Layer& layer = m.layers[li];
        if (auto* sl = std::get_if<ShiftLayerState>(&layer.state)) {
            // shift weights are exact powers of two; only activations are snapped
            Tensor qin = snap_to_precision(cur, m.precision);
            Tensor out({n, sl->geom.out_channels, sl->geom.out_rows, sl->geom.out_cols});
            for (std::size_t b = 0; b < n; ++b)
                set_sample(out, b, shift_forward(sample_of(qin, b), sl->weights, sl->geom));
            if (cache) cache->inputs[li] = std::move(qin);
            cur = std::move(out);
        } else if (auto* al = std::get_if<AddLayerState>(&layer.state)) {
            Tensor qin = snap_to_precision(cur, m.precision);
            AddWeights qw = al->weights;
            qw.values = snap_to_precision(qw.values, m.precision);
            Tensor out({n, al->geom.out_channels, al->geom.out_rows, al->geom.out_cols});
            for (std::size_t b = 0; b < n; ++b)
                set_sample(out, b, add_forward(sample_of(qin, b), qw, al->geom));
            if (cache) cache->inputs[li] = std::move(qin);
            cur = std::move(out);
        } else if (auto* cl = std::get_if<ConvLayerState>(&layer.state)) {
            Tensor qin = snap_to_precision(cur, m.precision);
            Tensor qw = snap_to_precision(cl->weights, m.precision);
            Tensor out({n, cl->geom.out_channels, cl->geom.out_rows, cl->geom.out_cols});
            for (std::size_t b = 0; b < n; ++b)
                set_sample(out, b, conv_forward(sample_of(qin, b), qw, cl->geom));
            if (cache) cache->inputs[li] = std::move(qin);
            cur = std::move(out);
        } else if (auto* bn = std::get_if<BatchNormState>(&layer.state)) {
            const std::size_t ch = bn->channels, hw = cur.dim(2) * cur.dim(3);
            const double count = static_cast<double>(n * hw);
            Tensor mean({ch}), var({ch});
            if (training) {
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t ci = 0; ci < ch; ++ci) {
                        const double* p = cur.data() + (b * ch + ci) * hw;
                        for (std::size_t i = 0; i < hw; ++i) mean[ci] += p[i];
                    }
                for (std::size_t ci = 0; ci < ch; ++ci) mean[ci] /= count;
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t ci = 0; ci < ch; ++ci) {
                        const double* p = cur.data() + (b * ch + ci) * hw;
                        for (std::size_t i = 0; i < hw; ++i) {
                            const double d = p[i] - mean[ci];
                            var[ci] += d * d;
                        }
                    }
                for (std::size_t ci = 0; ci < ch; ++ci) var[ci] /= count;
                for (std::size_t ci = 0; ci < ch; ++ci) {
                    bn->running_mean[ci] =
                        (1.0 - bn->momentum) * bn->running_mean[ci] + bn->momentum * mean[ci];
                    bn->running_var[ci] =
                        (1.0 - bn->momentum) * bn->running_var[ci] + bn->momentum * var[ci];
                }
            } else {
                mean = bn->running_mean;
                var = bn->running_var;
            }
            Tensor invstd({ch});
            for (std::size_t ci = 0; ci < ch; ++ci)
                invstd[ci] = 1.0 / std::sqrt(var[ci] + bn->eps);
            Tensor out(cur.shape());
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ci = 0; ci < ch; ++ci) {
                    const double* p = cur.data() + (b * ch + ci) * hw;
                    double* q = out.data() + (b * ch + ci) * hw;
                    for (std::size_t i = 0; i < hw; ++i)
                        q[i] = bn->gamma[ci] * (p[i] - mean[ci]) * invstd[ci] + bn->beta[ci];
                }
            if (cache) {
                cache->inputs[li] = std::move(cur);
                cache->bn_mean[li] = std::move(mean);
                cache->bn_invstd[li] = std::move(invstd);
            }
            cur = std::move(out);
        } else if (std::get_if<ReluState>(&layer.state)) {
            Tensor out(cur.shape());
            for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] > 0.0 ? cur[i] : 0.0;
            if (cache) cache->inputs[li] = cur;
            cur = std::move(out);
        } else if (auto* ap = std::get_if<AvgPoolState>(&layer.state)) {
            const std::size_t ch = ap->channels;
            Tensor out({n, ch, ap->out_rows, ap->out_cols});
            const std::size_t win_r = ap->window == 0 ? ap->in_rows : ap->window;
            const std::size_t win_c = ap->window == 0 ? ap->in_cols : ap->window;
            const double norm = 1.0 / static_cast<double>(win_r * win_c);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ci = 0; ci < ch; ++ci)
                    for (std::size_t e = 0; e < ap->out_rows; ++e)
                        for (std::size_t f = 0; f < ap->out_cols; ++f) {
                            double acc = 0.0;
                            for (std::size_t r = 0; r < win_r; ++r)
                                for (std::size_t s = 0; s < win_c; ++s)
                                    acc += cur[((b * ch + ci) * ap->in_rows + e * win_r + r) *
                                                   ap->in_cols +
                                               f * win_c + s];
                            out[((b * ch + ci) * ap->out_rows + e) * ap->out_cols + f] =
                                acc * norm;
                        }
            if (cache) cache->inputs[li] = cur;
            cur = std::move(out);
        }
        if (cache && cache->first_nonfinite_layer < 0 && !all_finite(cur))
            cache->first_nonfinite_layer = static_cast<std::ptrdiff_t>(li);
    }
    return cur.reshaped({n, m.arch.classes});
}

GradientStore model_backward(Model& m, const Tensor& loss_grad, const ForwardCache& cache) {
    if (cache.inputs.size() != m.layers.size())
        throw ConfigError("stale or missing forward cache");
    const std::size_t n = loss_grad.dim(0);
    GradientStore store(m.layers.size());

    Tensor u = loss_grad.reshaped({n, m.arch.classes, 1, 1});
    for (std::size_t ri = m.layers.size(); ri-- > 0;) {
        Layer& layer = m.layers[ri];
        const Tensor& xin = cache.inputs[ri];
        if (auto* sl = std::get_if<ShiftLayerState>(&layer.state)) {
            Tensor uq = snap_to_precision(u, m.precision);
            Tensor grad_p(sl->geom.filter_shape()), grad_s(sl->geom.filter_shape());
            Tensor grad_in(
                {n, sl->geom.in_channels, sl->geom.in_rows, sl->geom.in_cols});
            for (std::size_t b = 0; b < n; ++b) {
                ShiftGradients g =
                    shift_backward(sample_of(xin, b), sl->weights, sample_of(uq, b), sl->geom);
                set_sample(grad_in, b, g.grad_x);
                if (!sl->weights.frozen)
                    for (std::size_t i = 0; i < grad_p.size(); ++i) {
                        grad_p[i] += g.grad_p[i];
                        grad_s[i] += g.grad_s[i];
                    }
            }
            if (!sl->weights.frozen) {
                grad_p = snap_to_precision(grad_p, m.precision);
                grad_s = snap_to_precision(grad_s, m.precision);
            }
            store[ri] = {std::move(grad_p), std::move(grad_s)};
            u = snap_to_precision(grad_in, m.precision);
        } else if (auto* al = std::get_if<AddLayerState>(&layer.state)) {
            Tensor uq = snap_to_precision(u, m.precision);
            AddWeights qw = al->weights;
            qw.values = snap_to_precision(qw.values, m.precision);
            Tensor grad_w(al->geom.filter_shape());
            Tensor grad_in({n, al->geom.in_channels, al->geom.in_rows, al->geom.in_cols});
            for (std::size_t b = 0; b < n; ++b) {
                AddGradients g =
                    add_backward(sample_of(xin, b), qw, sample_of(uq, b), al->geom);
                set_sample(grad_in, b, g.grad_x);
                for (std::size_t i = 0; i < grad_w.size(); ++i) grad_w[i] += g.grad_w[i];
            }
            store[ri] = {snap_to_precision(grad_w, m.precision), Tensor()};
            u = snap_to_precision(grad_in, m.precision);
        } else if (auto* cl = std::get_if<ConvLayerState>(&layer.state)) {
            Tensor uq = snap_to_precision(u, m.precision);
            Tensor qw = snap_to_precision(cl->weights, m.precision);
            Tensor grad_w(cl->geom.filter_shape());
            Tensor grad_in({n, cl->geom.in_channels, cl->geom.in_rows, cl->geom.in_cols});
            for (std::size_t b = 0; b < n; ++b) {
                Tensor gx(cl->geom.input_shape());
                Tensor gw(cl->geom.filter_shape());
                conv_backward(sample_of(xin, b), qw, sample_of(uq, b), cl->geom, gw, gx);
                set_sample(grad_in, b, gx);
                for (std::size_t i = 0; i < grad_w.size(); ++i) grad_w[i] += gw[i];
            }
            store[ri] = {snap_to_precision(grad_w, m.precision), Tensor()};
            u = snap_to_precision(grad_in, m.precision);
        } else if (auto* bn = std::get_if<BatchNormState>(&layer.state)) {
            const std::size_t ch = bn->channels, hw = xin.dim(2) * xin.dim(3);
            const double count = static_cast<double>(n * hw);
            const Tensor& mean = cache.bn_mean[ri];
            const Tensor& invstd = cache.bn_invstd[ri];
            Tensor dgamma({ch}), dbeta({ch}), sum_u({ch}), sum_ux({ch});
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ci = 0; ci < ch; ++ci) {
                    const double* px = xin.data() + (b * ch + ci) * hw;
                    const double* pu = u.data() + (b * ch + ci) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xhat = (px[i] - mean[ci]) * invstd[ci];
                        sum_u[ci] += pu[i];
                        sum_ux[ci] += pu[i] * xhat;
                    }
                }
            dgamma = sum_ux;
            dbeta = sum_u;
            Tensor grad_in(xin.shape());
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ci = 0; ci < ch; ++ci) {
                    const double* px = xin.data() + (b * ch + ci) * hw;
                    const double* pu = u.data() + (b * ch + ci) * hw;
                    double* pg = grad_in.data() + (b * ch + ci) * hw;
                    const double scale = bn->gamma[ci] * invstd[ci];
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double xhat = (px[i] - mean[ci]) * invstd[ci];
                        pg[i] = cache.training
                                    ? scale * (pu[i] - sum_u[ci] / count -
                                               xhat * sum_ux[ci] / count)
                                    : scale * pu[i];
                    }
                }
            store[ri] = {std::move(dgamma), std::move(dbeta)};
            u = std::move(grad_in);
        } else if (std::get_if<ReluState>(&layer.state)) {
            Tensor grad_in(xin.shape());
            for (std::size_t i = 0; i < xin.size(); ++i)
                grad_in[i] = xin[i] > 0.0 ? u[i] : 0.0;
            u = std::move(grad_in);
        } else if (auto* ap = std::get_if<AvgPoolState>(&layer.state)) {
            const std::size_t ch = ap->channels;
            const std::size_t win_r = ap->window == 0 ? ap->in_rows : ap->window;
            const std::size_t win_c = ap->window == 0 ? ap->in_cols : ap->window;
            const double norm = 1.0 / static_cast<double>(win_r * win_c);
            Tensor grad_in({n, ch, ap->in_rows, ap->in_cols});
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ci = 0; ci < ch; ++ci)
                    for (std::size_t e = 0; e < ap->out_rows; ++e)
                        for (std::size_t f = 0; f < ap->out_cols; ++f) {
                            const double g =
                                u[((b * ch + ci) * ap->out_rows + e) * ap->out_cols + f] * norm;
                            for (std::size_t r = 0; r < win_r; ++r)
                                for (std::size_t s = 0; s < win_c; ++s)
                                    grad_in[((b * ch + ci) * ap->in_rows + e * win_r + r) *
                                                ap->in_cols +
                                            f * win_c + s] += g;
                        }
            u = std::move(grad_in);
        }
    }
    return store;
}

std::pair<double, Tensor> cross_entropy_loss(const Tensor& logits,
                                             const std::vector<std::size_t>& labels) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ConfigError("label count does not match batch");
    Tensor grad(logits.shape());
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        if (labels[b] >= k)
            throw ConfigError("label " + std::to_string(labels[b]) + " out of range [0," +
                              std::to_string(k) + ")");
        const double* row = logits.data() + b * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z) + mx;
        loss += logz - row[labels[b]];
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - logz);
            grad[b * k + j] = (p - (j == labels[b] ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    return {loss / static_cast<double>(n), grad};
}

}  // namespace shiftadd
