#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evsnn/labels.hpp"
#include "evsnn/preprocess.hpp"

namespace evsnn {

enum class LayerKind { conv, maxpool, dense };

std::string_view to_string(LayerKind kind);

/// Tensor shape, stored channel-last: flat index (y * width + x) * channels + c.
struct Shape
{
    int height = 1;
    int width = 1;
    int channels = 1;

    int size() const { return height * width * channels; }
    bool operator==(const Shape&) const = default;
};

struct LayerSpec
{
    LayerKind kind = LayerKind::dense;
    int units = 0;   // feature maps (conv) or neurons (dense)
    int kernel = 0;  // square kernel, valid padding, stride 1 (conv)
    int pool = 2;    // square window and stride (maxpool)

    bool operator==(const LayerSpec&) const = default;

    static LayerSpec conv(int maps, int kernel) { return {LayerKind::conv, maps, kernel, 0}; }
    static LayerSpec maxpool(int size = 2) { return {LayerKind::maxpool, 0, 0, size}; }
    static LayerSpec dense(int units) { return {LayerKind::dense, units, 0, 0}; }
};

/// Layer stack. Conv and hidden dense layers use ReLU; the final layer must be
/// dense and feeds a softmax. Dense layers read their input flattened in
/// channel-last row-major order.
struct ArchSpec
{
    Shape input;
    std::vector<LayerSpec> layers;

    /// 36x36x1 -> conv(4,5x5) -> pool 2 -> conv(4,5x5) -> pool 2 -> dense 40 -> dense 4.
    static ArchSpec steering();

    void validate() const;
    Shape input_shape(std::size_t layer) const;
    Shape output_shape(std::size_t layer) const;
    std::size_t weight_count(std::size_t layer) const;
    std::size_t bias_count(std::size_t layer) const;
    std::size_t parameter_count() const;
    /// Units after the input: the sum of every layer's output size.
    std::size_t neuron_count() const;
    std::size_t mac_count(std::size_t layer) const;
    std::size_t mac_count() const;
    bool has_params(std::size_t layer) const { return layers[layer].kind != LayerKind::maxpool; }

    bool operator==(const ArchSpec&) const = default;
};

inline constexpr std::string_view kFlattenOrder = "hwc_row_major";

/// conv weights: [ky][kx][in_channel][out_channel]; dense weights: [in][out].
struct LayerParams
{
    std::vector<double> weights;
    std::vector<double> biases;

    bool operator==(const LayerParams&) const = default;
};

using ParamSet = std::vector<LayerParams>;

struct NetworkParams
{
    ArchSpec arch;
    ParamSet layers;
    std::string flatten_order{kFlattenOrder};
    bool use_biases = true;

    bool operator==(const NetworkParams&) const = default;
};

/// Weights ~ U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)) drawn layer by layer in
/// storage order from Rng(seed); biases zero.
NetworkParams init_params(const ArchSpec& arch, std::uint64_t seed);

ParamSet zeros_like(const ParamSet& params);

struct ForwardResult
{
    std::vector<std::vector<double>> pre;         // pre-activation per layer (pool: pooled values)
    std::vector<std::vector<double>> activations;  // post-ReLU per layer; last entry = logits
    std::vector<double> logits;
    std::vector<double> probabilities;
};

ForwardResult forward(const NetworkParams& params, std::span<const double> input);
ForwardResult forward(const NetworkParams& params, const Frame& frame);

/// Index of the largest value; ties resolve to the lowest index.
int argmax(std::span<const double> values);

ClassLabel predict(const NetworkParams& params, const Frame& frame);

struct LabeledFrame
{
    Frame frame;
    ClassLabel label = ClassLabel::invisible;
};

struct LossGrad
{
    double loss = 0.0;
    ParamSet gradients;
};

/// Mean categorical cross-entropy over the batch plus l2 * sum of squared
/// parameters (biases included unless params.use_biases is false).
LossGrad loss_grad(const NetworkParams& params, std::span<const LabeledFrame> batch, double l2);
LossGrad loss_grad(const NetworkParams& params, std::span<const std::vector<double>> inputs,
                   std::span<const ClassLabel> labels, double l2);

struct AdamConfig
{
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState
{
    ParamSet m;
    ParamSet v;
    std::int64_t step = 0;

    static AdamState for_params(const ParamSet& params);
};

/// One bias-corrected Adam update, in place.
void adam_step(ParamSet& params, const ParamSet& gradients, AdamState& state, const AdamConfig& config);

struct TrainConfig
{
    int epochs = 30;
    int batch_size = 32;
    AdamConfig adam;
    double l2 = 1e-4;
    bool use_biases = true;
    std::uint64_t seed = 1;
};

struct EpochStats
{
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = -1.0;  // negative when no validation set
};

struct TrainResult
{
    NetworkParams params;
    std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam. Each epoch visits the training set in an order shuffled
/// by Rng(seed); train_accuracy is measured on the batches before each update.
TrainResult train(std::span<const LabeledFrame> data, std::span<const LabeledFrame> validation,
                  const ArchSpec& arch, const TrainConfig& config, const EpochCallback& on_epoch = {});

double accuracy(const NetworkParams& params, std::span<const LabeledFrame> data);

/// Cost of one frame-based inference: 2 operations (multiply + add) per
/// multiply-accumulate of every conv and dense layer.
std::uint64_t ann_op_count(const ArchSpec& arch);

std::vector<double> to_input(const Frame& frame);

}  // namespace evsnn
