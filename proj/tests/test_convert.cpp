#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "evsnn/convert.hpp"
#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"
#include "snn_fixtures.hpp"

using namespace evsnn;
using namespace evsnn::testing;

namespace {

double percentile_oracle(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> random_frame_input(Rng& rng, int n)
{
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x)
        v = rng.uniform();
    return x;
}

}  // namespace

TEST_CASE("percentile interpolates linearly between order statistics")
{
    std::vector<double> v{9, 3, 0, 1, 8, 2, 7, 4, 6, 5};
    CHECK(percentile(v, 50) == 4.5);
    CHECK(percentile(v, 100) == 9);
    CHECK(percentile(v, 10) == doctest::Approx(0.9));
    CHECK_THROWS_AS(percentile(v, 0), ConfigError);
    std::vector<double> empty;
    CHECK_THROWS_AS(percentile(empty, 50), ConfigError);

    Rng rng(3);
    for (int t = 0; t < 200; ++t)
    {
        std::vector<double> x(1 + rng.uniform_int(300));
        for (auto& e : x)
            e = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0, 5);
        const double p = rng.uniform(0.5, 100);
        auto copy = x;
        CHECK(percentile(copy, p) == doctest::Approx(percentile_oracle(x, p)).epsilon(1e-12));
    }
}

TEST_CASE("scales on a hand-computed layer")
{
    auto p = dense_params(1, {10});
    for (int j = 0; j < 10; ++j)
        p.layers[0].weights[static_cast<std::size_t>(j)] = j;
    const std::vector<std::vector<double>> one{{1.0}};
    CHECK(estimate_scales(p, one, 50).lambda[0] == 4.5);
    CHECK(estimate_scales(p, one, 100).lambda[0] == 9.0);
}

TEST_CASE("scale estimation properties")
{
    Rng rng(4);
    const auto arch = small_conv_arch();
    const auto p = random_params(arch, rng, 0.5, 0.1);
    const auto x = random_frame_input(rng, 81);
    const std::vector<std::vector<double>> one{x};
    const auto s = estimate_scales(p, one, 100);
    const auto r = forward(p, x);
    double prev = 1.0;
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
    {
        if (arch.has_params(i))
        {
            double top = 0;
            for (auto a : r.activations[i])
                top = std::max(top, a);
            CHECK(s.lambda[i] == top);
            prev = top;
        }
        else
            CHECK(s.lambda[i] == prev);
    }

    std::vector<std::vector<double>> many;
    for (int i = 0; i < 5; ++i)
        many.push_back(random_frame_input(rng, 81));
    std::vector<std::vector<double>> tripled;
    for (int k = 0; k < 3; ++k)
        tripled.insert(tripled.end(), many.begin(), many.end());
    // exact at p = 100; interpolated percentiles move within one order-statistic gap
    const auto a = estimate_scales(p, many, 100);
    const auto b = estimate_scales(p, tripled, 100);
    CHECK(a == b);
    const auto c = estimate_scales(p, std::vector<std::vector<double>>{many[0]}, 50);
    const auto d = estimate_scales(p, std::vector<std::vector<double>>{many[0], many[0], many[0]}, 50);
    const auto r0 = forward(p, many[0]);
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
    {
        if (!arch.has_params(i))
            continue;
        std::vector<double> acts;
        for (auto v : r0.activations[i])
            acts.push_back(std::max(v, 0.0));
        std::sort(acts.begin(), acts.end());
        const auto lo = std::lower_bound(acts.begin(), acts.end(), c.lambda[i]);
        const double below = lo == acts.begin() ? acts.front() : *(lo - 1);
        const double above = lo == acts.end() ? acts.back() : *lo;
        CHECK(d.lambda[i] >= below);
        CHECK(d.lambda[i] <= above);
    }
}

TEST_CASE("dead layer")
{
    auto p = dense_params(3, {4, 4});
    const std::vector<std::vector<double>> x{{0.5, 0.2, 0.1}};
    try
    {
        estimate_scales(p, x, 99.9);
        FAIL("expected a dead layer");
    }
    catch (const DeadLayerError& e)
    {
        CHECK(e.layer() == 0);
    }
    CHECK_THROWS_AS(estimate_scales(p, std::vector<std::vector<double>>{}, 99.9), ConfigError);
}

TEST_CASE("rescale")
{
    Rng rng(5);
    const auto arch = small_conv_arch();
    const auto p = random_params(arch, rng, 0.5, 0.2);
    ScaleFactors ones{std::vector<double>(arch.layers.size(), 1.0), 100};
    CHECK(rescale(p, ones) == p);

    auto d = dense_params(2, {4});
    d.layers[0].weights = {1, 2, 3, 4, 5, 6, 7, 8};
    d.layers[0].biases = {2, 4, 6, 8};
    const auto h = rescale(d, ScaleFactors{{2.0}, 100});
    CHECK(h.layers[0].weights == std::vector<double>{0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4});
    CHECK(h.layers[0].biases == std::vector<double>{1, 2, 3, 4});

    // argmax is preserved for positive per-layer scales
    for (int t = 0; t < 50; ++t)
    {
        const auto q = random_params(arch, rng, 0.6, 0.3);
        ScaleFactors s;
        double lam = 1.0;
        for (std::size_t i = 0; i < arch.layers.size(); ++i)
        {
            if (arch.has_params(i))
                lam = std::exp(rng.uniform(-3, 3));
            s.lambda.push_back(lam);
        }
        const auto r = rescale(q, s);
        for (int k = 0; k < 10; ++k)
        {
            const auto x = random_frame_input(rng, 81);
            CHECK(argmax(forward(q, x).logits) == argmax(forward(r, x).logits));
        }
    }
}

TEST_CASE("bias audit")
{
    auto p = dense_params(2, {3, 4});
    auto net = build_spiking(p);
    CHECK(audit_biases(net).flagged.empty());

    p.layers[0].biases = {1.0, 0.2, -0.7};
    p.layers[1].biases = {0.0, 0.3, 0.0, -0.1};
    net = build_spiking(p);
    const auto r = audit_biases(net, 0.5);
    REQUIRE(r.flagged.size() == 2);
    CHECK(r.flagged[0].layer == 0);
    CHECK(r.flagged[0].neuron == 0);
    CHECK(r.flagged[0].ratio == 1.0);
    CHECK(r.flagged[1].ratio == doctest::Approx(0.7));
    CHECK(audit_biases(net, 0.0).flagged.size() == 5);
    CHECK(r.ratios[1][3] == doctest::Approx(0.1));
}

TEST_CASE("build_spiking")
{
    const auto arch = ArchSpec::steering();
    const auto p = init_params(arch, 2);
    const auto net = build_spiking(p);
    CHECK(net.neuron_count() == 5884);

    // connections implied by the architecture: taps of every layer after the
    // first, plus one gate connection per pooled input
    std::uint64_t implied = 0;
    for (std::size_t i = 1; i < arch.layers.size(); ++i)
    {
        if (arch.has_params(i))
            implied += arch.mac_count(i);
        else
        {
            const auto out = arch.output_shape(i);
            implied += static_cast<std::uint64_t>(out.size()) * arch.layers[i].pool * arch.layers[i].pool;
        }
    }
    CHECK(net.synapse_count() == implied);
    CHECK(implied == 68'192);
    std::uint64_t input = 0;
    for (auto f : net.input_fan_out)
        input += f;
    CHECK(input == arch.mac_count(0));
    CHECK(net.input_fan_out[0] == 4);
    CHECK(net.input_fan_out[18 * 36 + 18] == 100);

    auto bad = p;
    bad.flatten_order.clear();
    CHECK_THROWS_AS(build_spiking(bad), BuildError);

    ArchSpec pool_first;
    pool_first.input = {4, 4, 1};
    pool_first.layers = {LayerSpec::maxpool(2), LayerSpec::dense(4)};
    CHECK_THROWS_AS(build_spiking(init_params(pool_first, 1)), BuildError);
}

TEST_CASE("identity 1x1 conv keeps its weights")
{
    ArchSpec a;
    a.input = {3, 3, 1};
    a.layers = {LayerSpec::conv(1, 1), LayerSpec::dense(4)};
    auto p = init_params(a, 1);
    p.layers[0].weights = {1.0};
    const auto net = build_spiking(p);
    CHECK(net.layers[0].weights == std::vector<std::int64_t>{kFixedOne});
    CHECK(net.layers[1].weights.size() == 36);
    for (std::size_t i = 0; i < 36; ++i)
        CHECK(net.layers[1].weights[i] == to_fixed(p.layers[1].weights[i]));
}

TEST_CASE("convert keeps a conversion record")
{
    Rng rng(6);
    const auto arch = ArchSpec::steering();
    auto p = init_params(arch, 3);
    for (auto& l : p.layers)
        for (auto& b : l.biases)
            b = 0.05;
    std::vector<Frame> frames(3, Frame(36, 36));
    for (auto& f : frames)
        for (auto& c : f.cells)
            c = static_cast<float>(rng.uniform());
    const auto net = convert(p, frames, 99.0);
    REQUIRE(net.conversion);
    CHECK(net.conversion->calibration_frames == 3);
    CHECK(net.conversion->scales.percentile == 99.0);
    CHECK(net.conversion->calibration_fingerprint == fingerprint(frames));
    frames[1].cells[7] += 0.001f;
    CHECK(net.conversion->calibration_fingerprint != fingerprint(frames));
}
