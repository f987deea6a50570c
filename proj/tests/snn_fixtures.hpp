#pragma once

// Small hand-made networks shared by the simulator tests.

#include <vector>

#include "evsnn/ann.hpp"
#include "evsnn/convert.hpp"
#include "evsnn/rng.hpp"
#include "evsnn/snn.hpp"

namespace evsnn::testing {

inline NetworkParams dense_params(int inputs, const std::vector<int>& sizes)
{
    ArchSpec a;
    a.input = {1, inputs, 1};
    for (int s : sizes)
        a.layers.push_back(LayerSpec::dense(s));
    auto p = init_params(a, 1);
    for (auto& l : p.layers)
    {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
    return p;
}

/// Random weights in [-w, w] and biases in [-b, b].
inline NetworkParams random_params(const ArchSpec& arch, Rng& rng, double w, double b)
{
    auto p = init_params(arch, rng.next());
    for (auto& l : p.layers)
    {
        for (auto& x : l.weights)
            x = rng.uniform(-w, w);
        for (auto& x : l.biases)
            x = rng.uniform(-b, b);
    }
    return p;
}

inline ArchSpec random_dense_arch(Rng& rng, int inputs, int depth)
{
    ArchSpec a;
    a.input = {1, inputs, 1};
    for (int i = 0; i < depth; ++i)
        a.layers.push_back(LayerSpec::dense(2 + static_cast<int>(rng.uniform_int(8))));
    a.layers.push_back(LayerSpec::dense(4));
    return a;
}

inline ArchSpec small_conv_arch()
{
    ArchSpec a;
    a.input = {9, 9, 1};
    a.layers = {LayerSpec::conv(3, 3), LayerSpec::maxpool(2), LayerSpec::conv(2, 2), LayerSpec::dense(4)};
    return a;
}

inline std::vector<InputSpike> random_input(Rng& rng, std::uint32_t pixels, double density, std::uint32_t max_count)
{
    std::vector<InputSpike> in;
    for (std::uint32_t p = 0; p < pixels; ++p)
        if (rng.bernoulli(density))
            in.push_back({p, 1 + static_cast<std::uint32_t>(rng.uniform_int(max_count))});
    return in;
}

}  // namespace evsnn::testing
