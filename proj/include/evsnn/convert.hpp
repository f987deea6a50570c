#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsnn/ann.hpp"

namespace evsnn {

/// Fixed-point unit for membrane potentials, weights and currents: 1.0 is
/// stored as 10^12. Integer arithmetic makes the event-driven simulator
/// reproduce naive stepping bit for bit.
inline constexpr std::int64_t kFixedOne = 1'000'000'000'000;

std::int64_t to_fixed(double value);
double from_fixed(std::int64_t value);

/// One lambda per layer of the architecture. Pool layers repeat the value of
/// the layer feeding them; the input plane is implicitly 1.
struct ScaleFactors
{
    std::vector<double> lambda;
    double percentile = 99.9;

    bool operator==(const ScaleFactors&) const = default;
};

/// Linear interpolation between order statistics (numpy's default):
/// position = p / 100 * (n - 1). Reorders `values`.
double percentile(std::vector<double>& values, double p);

/// Pools every activation of each parameterized layer over the calibration
/// inputs. The output layer is measured on max(logit, 0).
ScaleFactors estimate_scales(const NetworkParams& params, std::span<const std::vector<double>> calibration,
                             double p = 99.9);
ScaleFactors estimate_scales(const NetworkParams& params, std::span<const Frame> calibration, double p = 99.9);

/// W' = W * lambda_prev / lambda, b' = b / lambda.
NetworkParams rescale(const NetworkParams& params, const ScaleFactors& scales);

struct SpikingLayer
{
    LayerKind kind = LayerKind::dense;
    Shape in;
    Shape out;
    int kernel = 0;
    int pool = 0;
    std::vector<std::int64_t> weights;  // fixed point, same layout as LayerParams
    std::vector<std::int64_t> biases;   // expanded to one per neuron
    /// Outgoing synapses per neuron of this layer (0 for the output layer).
    std::vector<std::uint32_t> fan_out;

    std::size_t size() const { return static_cast<std::size_t>(out.size()); }
};

struct ConversionInfo
{
    ScaleFactors scales;
    std::uint64_t calibration_fingerprint = 0;
    std::size_t calibration_frames = 0;
};

struct SpikingNetwork
{
    NetworkParams params;  // rescaled, real-valued
    double threshold = 1.0;
    std::int64_t threshold_fixed = kFixedOne;
    std::vector<SpikingLayer> layers;
    std::vector<std::uint32_t> input_fan_out;  // synapses from each input pixel into layer 0
    std::optional<ConversionInfo> conversion;

    std::size_t neuron_count() const;
    std::uint64_t synapse_count() const;  // sum of fan-outs, input plane excluded
};

/// Conv and dense layers become IF populations with the shared threshold;
/// pool layers become gating units.
SpikingNetwork build_spiking(const NetworkParams& rescaled, double threshold = 1.0);

struct BiasEntry
{
    std::size_t layer = 0;
    std::size_t neuron = 0;
    double ratio = 0.0;  // |b'| / threshold
};

struct BiasAuditReport
{
    double warn_fraction = 0.5;
    std::vector<std::vector<double>> ratios;  // per layer, empty for pool layers
    std::vector<BiasEntry> flagged;           // descending by ratio
};

BiasAuditReport audit_biases(const SpikingNetwork& snn, double warn_fraction = 0.5);

/// FNV-1a over the calibration values, order sensitive.
std::uint64_t fingerprint(std::span<const Frame> frames);

/// estimate_scales + rescale + build_spiking, keeping the conversion record.
SpikingNetwork convert(const NetworkParams& params, std::span<const Frame> calibration, double p = 99.9,
                       double threshold = 1.0);

}  // namespace evsnn
