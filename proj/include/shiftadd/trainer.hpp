#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shiftadd/dataset.hpp"
#include "shiftadd/energy.hpp"
#include "shiftadd/network.hpp"

namespace shiftadd {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    // empty: scaled from the 80/120-of-160 schedule to {1/2, 3/4} of epochs
    std::vector<std::size_t> lr_drop_epochs;
    Precision precision = Precision::FP32;
    bool freeze_shift = false;
    double shift_update_threshold = 0.5;
    double shift_prune_ratio = 0.0;  // applied to shift layers before training
    double add_prune_ratio = 0.0;    // applied to add layers before training
    PrunePolicy add_prune_policy = PrunePolicy::Random;
    Platform platform = Platform::ASIC45nm;
    std::uint64_t seed = 0;

    std::vector<std::size_t> resolved_drops() const;
    std::string fingerprint() const;  // config hash, stable across runs
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0, train_acc = 0.0;
    double test_loss = 0.0, test_acc = 0.0;
    double cumulative_joules = 0.0;
    double wall_seconds = 0.0;  // informational; excluded from equality
};

struct TrainRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    bool energy_substituted = false;
    std::vector<EpochStats> epochs;
};

// wall_seconds is nondeterministic and ignored.
bool records_equal(const TrainRecord& a, const TrainRecord& b);

double lr_at(std::size_t epoch, const TrainConfig& cfg);

// AdderNet-style per-layer scaling: global_lr * sqrt(k) / (||grad||_2 + eps).
double adaptive_add_lr(const Tensor& grad_w, std::size_t k, double global_lr);

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay);

// Full resumable training state (checkpointed by the io module).
struct TrainerState {
    Model model;
    TrainConfig cfg;
    std::vector<Tensor> velocity_a;  // per layer: add/conv grad_w or bn dgamma
    std::vector<Tensor> velocity_b;  // per layer: bn dbeta
    std::mt19937_64 rng;
    std::size_t next_epoch = 0;
    TrainRecord record;
};

TrainerState make_trainer(Model model, const TrainConfig& cfg);

// Runs epochs [state.next_epoch, until). NaN losses abort with the first
// offending layer named.
void train_epochs(TrainerState& state, const Dataset& train_set, const Dataset& test_set,
                  std::size_t until);

std::pair<Model, TrainRecord> train(Model model, const Dataset& train_set,
                                    const Dataset& test_set, const TrainConfig& cfg);

std::pair<double, double> evaluate(Model& model, const Dataset& data,
                                   std::size_t batch_size = 64);

// Per-epoch compute energy at the trainer's charging policy.
double epoch_energy_joules(const Model& model, const TrainConfig& cfg, std::size_t samples);

}  // namespace shiftadd
