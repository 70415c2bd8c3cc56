#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shiftadd/add_layer.hpp"
#include "shiftadd/quantize.hpp"
#include "shiftadd/shift_layer.hpp"
#include "shiftadd/tensor.hpp"

namespace shiftadd {

enum class LayerKind {
    ShiftAdd,
    ShiftOnly,
    AddOnly,
    MultConv,
    BatchNorm,
    ReLU,
    AvgPool,
    LinearShiftAdd,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

// One line of the declarative architecture config.
struct LayerSpec {
    LayerKind kind = LayerKind::ShiftAdd;
    std::size_t out_channels = 0;  // conv-like kinds
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t pool = 2;  // avgpool window; 0 = global
};

struct ArchConfig {
    std::size_t in_channels = 1;
    std::size_t in_rows = 12;
    std::size_t in_cols = 12;
    std::size_t classes = 2;
    std::vector<LayerSpec> layers;
    // shift layer knobs (External Interfaces: shift.*)
    int shift_p_min = -7;
    double shift_nonzero_fraction = 0.5;
    ShiftMode shift_mode = ShiftMode::Learnable;
    double shift_update_threshold = 0.5;
};

// Expanded per-layer states. A shiftadd spec line expands to
// shift -> batchnorm -> add -> batchnorm.
struct ShiftLayerState {
    ConvGeometry geom;
    ShiftWeights weights;
};
struct AddLayerState {
    ConvGeometry geom;
    AddWeights weights;
};
struct ConvLayerState {
    ConvGeometry geom;
    Tensor weights;  // (C_O, C_I, R, S)
};
struct BatchNormState {
    std::size_t channels = 0;
    Tensor gamma, beta, running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;
};
struct ReluState {};
struct AvgPoolState {
    std::size_t window = 0;  // 0 = global
    std::size_t channels = 0;
    std::size_t in_rows = 0, in_cols = 0;
    std::size_t out_rows = 0, out_cols = 0;
};

using LayerState =
    std::variant<ShiftLayerState, AddLayerState, ConvLayerState, BatchNormState, ReluState,
                 AvgPoolState>;

struct Layer {
    std::string name;
    std::size_t spec_index = 0;
    LayerState state;
};

struct Model {
    ArchConfig arch;
    Precision precision = Precision::FP32;
    std::uint64_t seed = 0;
    bool freeze_shift = false;
    std::vector<Layer> layers;

    std::size_t parameter_count() const;
    std::size_t parameter_bytes() const;  // at the model precision
    std::string summary() const;
};

Model build_model(const ArchConfig& arch, std::uint64_t seed, Precision precision,
                  bool freeze_shift = false);

// Per-layer tensors retained for the backward pass. inputs[i] is the batch
// that actually entered layer i's kernel (post-quantization in FIX modes).
struct ForwardCache {
    std::vector<Tensor> inputs;
    std::vector<Tensor> bn_invstd;  // per BN layer index, (C)
    std::vector<Tensor> bn_mean;
    bool training = false;
    std::ptrdiff_t first_nonfinite_layer = -1;
};

// batch: (N, C, H, W). Returns logits (N, classes).
Tensor model_forward(Model& m, const Tensor& batch, ForwardCache* cache, bool training);

struct LayerGradients {
    Tensor primary;    // shift: grad_p | add/conv: grad_w | bn: dgamma
    Tensor secondary;  // shift: grad_s | bn: dbeta
};

using GradientStore = std::vector<LayerGradients>;

// loss_grad: (N, classes). Requires the cache from a matching forward.
GradientStore model_backward(Model& m, const Tensor& loss_grad, const ForwardCache& cache);

// Mean softmax cross entropy; grad is (softmax - onehot)/N.
std::pair<double, Tensor> cross_entropy_loss(const Tensor& logits,
                                             const std::vector<std::size_t>& labels);

}  // namespace shiftadd
