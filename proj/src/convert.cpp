#include "evsnn/convert.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "evsnn/errors.hpp"

namespace evsnn {

std::int64_t to_fixed(double value)
{
    const double scaled = std::round(value * static_cast<double>(kFixedOne));
    if (!std::isfinite(scaled) || std::abs(scaled) >= 9.2e18)
        throw NumericError("value " + std::to_string(value) + " does not fit the fixed-point range");
    return static_cast<std::int64_t>(scaled);
}

double from_fixed(std::int64_t value) { return static_cast<double>(value) / static_cast<double>(kFixedOne); }

double percentile(std::vector<double>& values, double p)
{
    if (values.empty())
        throw ConfigError("percentile of an empty set");
    if (!(p > 0.0 && p <= 100.0))
        throw ConfigError("percentile must lie in (0, 100]");
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size())
        return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + frac * (b - a);
}

ScaleFactors estimate_scales(const NetworkParams& params, std::span<const std::vector<double>> calibration, double p)
{
    if (calibration.empty())
        throw ConfigError("scale estimation needs at least one calibration frame");
    if (!(p > 0.0 && p <= 100.0))
        throw ConfigError("percentile must lie in (0, 100]");
    const auto& arch = params.arch;
    const auto n = arch.layers.size();
    std::vector<std::vector<double>> pooled(n);
    for (const auto& x : calibration)
    {
        const auto r = forward(params, x);
        for (std::size_t i = 0; i < n; ++i)
        {
            if (!arch.has_params(i))
                continue;
            for (auto a : r.activations[i])
                pooled[i].push_back(std::max(a, 0.0));
        }
    }
    ScaleFactors s;
    s.percentile = p;
    s.lambda.assign(n, 1.0);
    double prev = 1.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        if (arch.has_params(i))
        {
            prev = percentile(pooled[i], p);
            if (!(prev > 0.0))
                throw DeadLayerError(i, std::string(to_string(arch.layers[i].kind)));
        }
        s.lambda[i] = prev;
    }
    return s;
}

ScaleFactors estimate_scales(const NetworkParams& params, std::span<const Frame> calibration, double p)
{
    std::vector<std::vector<double>> inputs;
    inputs.reserve(calibration.size());
    for (const auto& f : calibration)
        inputs.push_back(to_input(f));
    return estimate_scales(params, inputs, p);
}

NetworkParams rescale(const NetworkParams& params, const ScaleFactors& scales)
{
    const auto n = params.arch.layers.size();
    if (scales.lambda.size() != n)
        throw ConfigError("scale vector does not match the architecture");
    NetworkParams out = params;
    double prev = 1.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double lam = scales.lambda[i];
        if (!(lam > 0.0))
            throw ConfigError("scale factors must be positive");
        if (params.arch.has_params(i))
        {
            const double wf = prev / lam;
            for (auto& w : out.layers[i].weights)
                w *= wf;
            for (auto& b : out.layers[i].biases)
                b /= lam;
        }
        prev = lam;
    }
    return out;
}

namespace {

std::vector<std::int64_t> fixed(const std::vector<double>& v)
{
    std::vector<std::int64_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = to_fixed(v[i]);
    return out;
}

// Synapses leaving each unit of a population with shape `in` into layer `next`.
std::vector<std::uint32_t> fan_out_into(const Shape& in, const LayerSpec& next, const Shape& next_out)
{
    std::vector<std::uint32_t> f(static_cast<std::size_t>(in.size()), 0);
    switch (next.kind)
    {
        case LayerKind::dense:
            std::fill(f.begin(), f.end(), static_cast<std::uint32_t>(next_out.size()));
            break;
        case LayerKind::conv:
            for (int oy = 0; oy < next_out.height; ++oy)
                for (int ox = 0; ox < next_out.width; ++ox)
                    for (int ky = 0; ky < next.kernel; ++ky)
                        for (int kx = 0; kx < next.kernel; ++kx)
                            for (int c = 0; c < in.channels; ++c)
                                f[static_cast<std::size_t>(((oy + ky) * in.width + ox + kx) * in.channels + c)] +=
                                    static_cast<std::uint32_t>(next_out.channels);
            break;
        case LayerKind::maxpool:
            for (int y = 0; y < next_out.height * next.pool; ++y)
                for (int x = 0; x < next_out.width * next.pool; ++x)
                    for (int c = 0; c < in.channels; ++c)
                        f[static_cast<std::size_t>((y * in.width + x) * in.channels + c)] = 1;
            break;
    }
    return f;
}

}  // namespace

std::size_t SpikingNetwork::neuron_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers)
        n += l.size();
    return n;
}

std::uint64_t SpikingNetwork::synapse_count() const
{
    std::uint64_t n = 0;
    for (const auto& l : layers)
        for (auto f : l.fan_out)
            n += f;
    return n;
}

SpikingNetwork build_spiking(const NetworkParams& rescaled, double threshold)
{
    if (rescaled.flatten_order != kFlattenOrder)
        throw BuildError("unsupported or missing flatten order '" + rescaled.flatten_order + "'");
    if (!(threshold > 0.0))
        throw BuildError("threshold must be positive");
    const auto& arch = rescaled.arch;
    arch.validate();
    if (arch.layers.front().kind == LayerKind::maxpool)
        throw BuildError("a pool layer cannot read the input plane directly");
    if (rescaled.layers.size() != arch.layers.size())
        throw BuildError("parameter set does not match the architecture");

    SpikingNetwork net;
    net.params = rescaled;
    net.threshold = threshold;
    net.threshold_fixed = to_fixed(threshold);
    const auto n = arch.layers.size();
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto& spec = arch.layers[i];
        SpikingLayer l;
        l.kind = spec.kind;
        l.in = arch.input_shape(i);
        l.out = arch.output_shape(i);
        l.kernel = spec.kernel;
        l.pool = spec.pool;
        if (arch.has_params(i))
        {
            if (rescaled.layers[i].weights.size() != arch.weight_count(i) ||
                rescaled.layers[i].biases.size() != arch.bias_count(i))
                throw BuildError("layer " + std::to_string(i) + " parameters have the wrong shape");
            l.weights = fixed(rescaled.layers[i].weights);
            // one entry per neuron; conv maps share theirs
            l.biases.assign(l.size(), 0);
            if (rescaled.use_biases)
            {
                const auto per_map = fixed(rescaled.layers[i].biases);
                for (std::size_t n = 0; n < l.size(); ++n)
                    l.biases[n] = per_map[n % per_map.size()];
            }
        }
        if (i + 1 < n)
            l.fan_out = fan_out_into(l.out, arch.layers[i + 1], arch.output_shape(i + 1));
        else
            l.fan_out.assign(l.size(), 0);
        net.layers.push_back(std::move(l));
    }
    net.input_fan_out = fan_out_into(arch.input, arch.layers[0], arch.output_shape(0));
    return net;
}

BiasAuditReport audit_biases(const SpikingNetwork& snn, double warn_fraction)
{
    BiasAuditReport r;
    r.warn_fraction = warn_fraction;
    r.ratios.resize(snn.layers.size());
    for (std::size_t i = 0; i < snn.layers.size(); ++i)
    {
        const auto& l = snn.layers[i];
        if (l.kind == LayerKind::maxpool)
            continue;
        r.ratios[i].resize(l.biases.size());
        for (std::size_t j = 0; j < l.biases.size(); ++j)
        {
            // exact comparison on the fixed-point values
            const auto mag = l.biases[j] < 0 ? -l.biases[j] : l.biases[j];
            r.ratios[i][j] = static_cast<double>(mag) / static_cast<double>(snn.threshold_fixed);
            if (mag > 0 && static_cast<long double>(mag) >= static_cast<long double>(warn_fraction) * snn.threshold_fixed)
                r.flagged.push_back({i, j, r.ratios[i][j]});
        }
    }
    std::stable_sort(r.flagged.begin(), r.flagged.end(),
                     [](const BiasEntry& a, const BiasEntry& b) { return a.ratio > b.ratio; });
    return r;
}

std::uint64_t fingerprint(std::span<const Frame> frames)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i)
        {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& f : frames)
    {
        const std::int32_t dims[2] = {f.width, f.height};
        mix(dims, sizeof dims);
        mix(f.cells.data(), f.cells.size() * sizeof(float));
    }
    return h;
}

SpikingNetwork convert(const NetworkParams& params, std::span<const Frame> calibration, double p, double threshold)
{
    const auto scales = estimate_scales(params, calibration, p);
    auto net = build_spiking(rescale(params, scales), threshold);
    net.conversion = ConversionInfo{scales, fingerprint(calibration), calibration.size()};
    return net;
}

}  // namespace evsnn
