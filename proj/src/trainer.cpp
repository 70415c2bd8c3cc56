#include "shiftadd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace shiftadd {

std::vector<std::size_t> TrainConfig::resolved_drops() const {
    if (!lr_drop_epochs.empty()) {
        for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
            if (lr_drop_epochs[i] >= epochs)
                throw ConfigError("lr drop epoch beyond training length");
            if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
                throw ConfigError("lr drop epochs must be strictly increasing");
        }
        return lr_drop_epochs;
    }
    std::vector<std::size_t> drops;
    if (epochs >= 2) drops.push_back(epochs / 2);
    if (epochs >= 4 && epochs * 3 / 4 > epochs / 2) drops.push_back(epochs * 3 / 4);
    return drops;
}

std::string TrainConfig::fingerprint() const {
    std::ostringstream os;
    os << epochs << "|" << batch_size << "|" << base_lr << "|" << momentum << "|"
       << weight_decay << "|" << precision_name(precision) << "|" << freeze_shift << "|"
       << shift_update_threshold << "|" << shift_prune_ratio << "|" << add_prune_ratio << "|"
       << (add_prune_policy == PrunePolicy::Random ? "random" : "magnitude") << "|"
       << platform_name(platform) << "|" << seed;
    for (auto e : lr_drop_epochs) os << "," << e;
    const std::string s = os.str();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

bool records_equal(const TrainRecord& a, const TrainRecord& b) {
    if (a.config_hash != b.config_hash || a.seed != b.seed ||
        a.energy_substituted != b.energy_substituted || a.epochs.size() != b.epochs.size())
        return false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        const auto& x = a.epochs[i];
        const auto& y = b.epochs[i];
        if (x.epoch != y.epoch || x.train_loss != y.train_loss || x.train_acc != y.train_acc ||
            x.test_loss != y.test_loss || x.test_acc != y.test_acc ||
            x.cumulative_joules != y.cumulative_joules)
            return false;
    }
    return true;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.epochs) throw ConfigError("epoch out of range");
    const auto drops = cfg.resolved_drops();
    std::size_t passed = 0;
    for (std::size_t d : drops)
        if (epoch >= d) ++passed;
    return cfg.base_lr * std::pow(10.0, -static_cast<double>(passed));
}

double adaptive_add_lr(const Tensor& grad_w, std::size_t k, double global_lr) {
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < grad_w.size(); ++i) norm_sq += grad_w[i] * grad_w[i];
    return global_lr * std::sqrt(static_cast<double>(k)) / (std::sqrt(norm_sq) + 1e-8);
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw GeometryError("sgd_step shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
        param[i] -= lr * velocity[i];
    }
}

TrainerState make_trainer(Model model, const TrainConfig& cfg) {
    TrainerState st;
    st.cfg = cfg;
    st.model = std::move(model);
    st.model.freeze_shift = cfg.freeze_shift;

    std::size_t salt = 0;
    for (auto& layer : st.model.layers) {
        if (auto* sl = std::get_if<ShiftLayerState>(&layer.state)) {
            if (cfg.freeze_shift) sl->weights.frozen = true;
            if (cfg.shift_prune_ratio > 0.0)
                shift_prune(sl->weights, cfg.shift_prune_ratio, cfg.seed * 7919 + salt);
        } else if (auto* al = std::get_if<AddLayerState>(&layer.state)) {
            if (cfg.add_prune_ratio > 0.0)
                add_prune(al->weights, cfg.add_prune_ratio, cfg.add_prune_policy,
                          cfg.seed * 104729 + salt);
        }
        ++salt;
    }

    st.velocity_a.resize(st.model.layers.size());
    st.velocity_b.resize(st.model.layers.size());
    for (std::size_t i = 0; i < st.model.layers.size(); ++i) {
        const auto& state = st.model.layers[i].state;
        if (const auto* al = std::get_if<AddLayerState>(&state))
            st.velocity_a[i] = Tensor(al->weights.values.shape());
        else if (const auto* cl = std::get_if<ConvLayerState>(&state))
            st.velocity_a[i] = Tensor(cl->weights.shape());
        else if (const auto* bn = std::get_if<BatchNormState>(&state)) {
            st.velocity_a[i] = Tensor({bn->channels});
            st.velocity_b[i] = Tensor({bn->channels});
        }
    }
    st.rng.seed(cfg.seed);
    st.record.config_hash = cfg.fingerprint();
    st.record.seed = cfg.seed;
    st.record.energy_substituted = train_energy_policy(cfg.precision).substituted;
    return st;
}

double epoch_energy_joules(const Model& model, const TrainConfig& cfg, std::size_t samples) {
    const EnergyPolicy policy = train_energy_policy(cfg.precision);
    const EnergyReport kernel = estimate_energy_mapped(
        model, {Phase::Forward, Phase::Backward}, policy, cfg.platform, samples);
    const std::size_t steps = (samples + cfg.batch_size - 1) / cfg.batch_size;
    const EnergyReport update =
        estimate_energy_mapped(model, {Phase::Update}, policy, cfg.platform, steps);
    return kernel.total_joules + update.total_joules;
}

namespace {

Tensor gather_batch(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t begin,
                    std::size_t end, std::vector<std::size_t>& labels) {
    const auto& s = d.images.shape();
    const std::size_t sample = s[1] * s[2] * s[3];
    Tensor batch({end - begin, s[1], s[2], s[3]});
    labels.clear();
    for (std::size_t j = begin; j < end; ++j) {
        std::copy_n(d.images.data() + idx[j] * sample, sample,
                    batch.data() + (j - begin) * sample);
        labels.push_back(d.labels[idx[j]]);
    }
    return batch;
}

[[noreturn]] void abort_nan(const Model& m, const ForwardCache& cache, std::size_t epoch) {
    std::string where = "loss";
    if (cache.first_nonfinite_layer >= 0)
        where = m.layers[static_cast<std::size_t>(cache.first_nonfinite_layer)].name;
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                       "; first offending layer: " + where);
}

}  // namespace

void train_epochs(TrainerState& st, const Dataset& train_set, const Dataset& test_set,
                  std::size_t until) {
    if (train_set.images.rank() != 4)
        throw GeometryError("train set images must be (N,C,H,W)");
    until = std::min(until, st.cfg.epochs);
    Model& m = st.model;

    std::vector<std::size_t> idx(train_set.size());
    for (std::size_t epoch = st.next_epoch; epoch < until; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, st.cfg);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), st.rng);

        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < idx.size(); b += st.cfg.batch_size) {
            const std::size_t lo = b, hi = std::min(idx.size(), b + st.cfg.batch_size);
            Tensor batch = gather_batch(train_set, idx, lo, hi, labels);
            ForwardCache cache;
            Tensor logits = model_forward(m, batch, &cache, true);
            auto [loss, lgrad] = cross_entropy_loss(logits, labels);
            if (!std::isfinite(loss)) abort_nan(m, cache, epoch);
            loss_sum += loss * static_cast<double>(hi - lo);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < m.arch.classes; ++j)
                    if (logits[i * m.arch.classes + j] > logits[i * m.arch.classes + arg])
                        arg = j;
                if (arg == labels[i]) ++correct;
            }
            seen += hi - lo;

            GradientStore grads = model_backward(m, lgrad, cache);
            for (std::size_t li = 0; li < m.layers.size(); ++li) {
                auto& state = m.layers[li].state;
                if (auto* sl = std::get_if<ShiftLayerState>(&state)) {
                    if (!sl->weights.frozen)
                        shift_update(sl->weights, grads[li].primary, grads[li].secondary, lr,
                                     st.cfg.shift_update_threshold);
                } else if (auto* al = std::get_if<AddLayerState>(&state)) {
                    // normalize only the gradient; momentum and decay still see
                    // the global rate, otherwise tiny gradient norms blow the
                    // whole update up
                    const double scale =
                        adaptive_add_lr(grads[li].primary, al->weights.size(), lr) / lr;
                    Tensor scaled = grads[li].primary;
                    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= scale;
                    sgd_step(al->weights.values, scaled, st.velocity_a[li], lr,
                             st.cfg.momentum, st.cfg.weight_decay);
                    // keep masked positions dead
                    for (std::size_t i = 0; i < al->weights.size(); ++i)
                        if (!al->weights.mask[i]) al->weights.values[i] = 0.0;
                } else if (auto* cl = std::get_if<ConvLayerState>(&state)) {
                    sgd_step(cl->weights, grads[li].primary, st.velocity_a[li], lr,
                             st.cfg.momentum, st.cfg.weight_decay);
                } else if (auto* bn = std::get_if<BatchNormState>(&state)) {
                    sgd_step(bn->gamma, grads[li].primary, st.velocity_a[li], lr,
                             st.cfg.momentum, st.cfg.weight_decay);
                    sgd_step(bn->beta, grads[li].secondary, st.velocity_b[li], lr,
                             st.cfg.momentum, st.cfg.weight_decay);
                }
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        auto [tl, ta] = evaluate(m, test_set);
        stats.test_loss = tl;
        stats.test_acc = ta;
        const double prev =
            st.record.epochs.empty() ? 0.0 : st.record.epochs.back().cumulative_joules;
        stats.cumulative_joules = prev + epoch_energy_joules(m, st.cfg, train_set.size());
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        st.record.epochs.push_back(stats);
        st.next_epoch = epoch + 1;
    }
}

std::pair<Model, TrainRecord> train(Model model, const Dataset& train_set,
                                    const Dataset& test_set, const TrainConfig& cfg) {
    TrainerState st = make_trainer(std::move(model), cfg);
    train_epochs(st, train_set, test_set, cfg.epochs);
    return {std::move(st.model), std::move(st.record)};
}

std::pair<double, double> evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
    const auto& s = data.images.shape();
    const std::size_t sample = s[1] * s[2] * s[3];
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < data.size(); b += batch_size) {
        const std::size_t hi = std::min(data.size(), b + batch_size);
        Tensor batch({hi - b, s[1], s[2], s[3]});
        std::copy_n(data.images.data() + b * sample, (hi - b) * sample, batch.data());
        std::vector<std::size_t> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(b),
                                        data.labels.begin() + static_cast<std::ptrdiff_t>(hi));
        Tensor logits = model_forward(model, batch, nullptr, false);
        auto [loss, grad] = cross_entropy_loss(logits, labels);
        (void)grad;
        loss_sum += loss * static_cast<double>(hi - b);
        const std::size_t k = model.arch.classes;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (logits[i * k + j] > logits[i * k + arg]) arg = j;
            if (arg == labels[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(data.size()),
            static_cast<double>(correct) / static_cast<double>(data.size())};
}

}  // namespace shiftadd
