#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "doctest.h"
#include "evsnn/errors.hpp"
#include "evsnn/preprocess.hpp"
#include "evsnn/rng.hpp"
#include "evsnn/synth.hpp"
#include "sample_fixtures.hpp"

using namespace evsnn;

namespace {

using testing::random_sample;
using testing::sample_from;

CountFrame toy(std::vector<std::int32_t> cells)
{
    CountFrame f(static_cast<int>(cells.size()), 1);
    f.cells = std::move(cells);
    return f;
}

}  // namespace

TEST_CASE("map_coords")
{
    using P = std::pair<int, int>;
    CHECK(map_coords(0, 0, kSensorGeometry, kSubsampledGeometry) == P{0, 0});
    CHECK(map_coords(239, 179, kSensorGeometry, kSubsampledGeometry) == P{35, 35});
    CHECK(map_coords(120, 90, kSensorGeometry, kSubsampledGeometry) == P{18, 18});
    for (int x = 0; x < 240; ++x)
        for (int y = 0; y < 180; ++y)
        {
            const auto [mx, my] = map_coords(x, y, kSensorGeometry, kSubsampledGeometry);
            REQUIRE(kSubsampledGeometry.contains(mx, my));
        }
}

TEST_CASE("subsample_stream")
{
    EventStream empty;
    CHECK(subsample_stream(empty, SubsampleMode::max).events.empty());

    EventStream s;
    s.events = {{500, 0, 0, Polarity::off}, {500, 1, 1, Polarity::on}, {500, 2, 2, Polarity::off}};
    const auto mx = subsample_stream(s, SubsampleMode::max);
    CHECK(mx.geometry == kSubsampledGeometry);
    REQUIRE(mx.events.size() == 1);
    CHECK(mx.events[0] == DvsEvent{500, 0, 0, Polarity::on});

    const auto sm = subsample_stream(s, SubsampleMode::sum);
    REQUIRE(sm.events.size() == 3);
    for (const auto& e : sm.events)
        CHECK(e == DvsEvent{500, 0, 0, Polarity::on});

    // A later timestamp at the same patch survives MAX unless a window is set.
    s.events.push_back({503, 3, 3, Polarity::on});
    CHECK(subsample_stream(s, SubsampleMode::max).events.size() == 2);
    CHECK(subsample_stream(s, SubsampleMode::max, 5).events.size() == 1);
}

TEST_CASE("subsampling properties on a synthetic recording")
{
    SceneConfig cfg;
    cfg.duration_us = 100'000;
    cfg.seed = 11;
    const auto rec = generate_recording(cfg);
    const auto mx = subsample_stream(rec.stream, SubsampleMode::max);
    const auto sm = subsample_stream(rec.stream, SubsampleMode::sum);
    CHECK(sm.events.size() == rec.stream.events.size());

    std::map<std::tuple<int, int, std::int64_t>, int> seen;
    for (std::size_t i = 0; i < mx.events.size(); ++i)
    {
        const auto& e = mx.events[i];
        CHECK(++seen[{e.x, e.y, e.timestamp_us}] == 1);
        CHECK(e.polarity == Polarity::on);
        if (i > 0)
            CHECK(mx.events[i - 1].timestamp_us <= e.timestamp_us);
    }
    const auto cm = count_frame(mx.events);
    const auto cs = count_frame(sm.events);
    for (std::size_t i = 0; i < cm.size(); ++i)
        CHECK(cs.cells[i] >= cm.cells[i]);
}

TEST_CASE("bin_samples")
{
    auto make = [](int n) {
        EventStream s;
        s.geometry = kSubsampledGeometry;
        for (int i = 0; i < n; ++i)
            s.events.push_back({i, 0, 0, Polarity::on});
        return s;
    };
    const LabelSource always_left = [](std::int64_t) { return std::optional<ClassLabel>(ClassLabel::left); };

    auto two = bin_samples(make(12000), 5000, always_left);
    REQUIRE(two.size() == 2);
    CHECK(two[0].start_us == 0);
    CHECK(two[0].end_us == 4999);
    CHECK(two[1].start_us == 5000);
    CHECK(two[1].end_us == 9999);
    CHECK(two[1].events.size() == 5000);

    CHECK(bin_samples(make(4999), 5000, always_left).empty());

    auto one = bin_samples(make(5000), 5000, always_left);
    REQUIRE(one.size() == 1);
    CHECK(one[0].start_us == 0);
    CHECK(one[0].end_us == 4999);

    // The label is read at the last event of each window.
    const LabelSource by_time = [](std::int64_t t) {
        return std::optional<ClassLabel>(t < 5000 ? ClassLabel::left : ClassLabel::right);
    };
    auto labelled = bin_samples(make(10000), 5000, by_time);
    CHECK(labelled[0].label == ClassLabel::left);
    CHECK(labelled[1].label == ClassLabel::right);

    const LabelSource missing = [](std::int64_t) { return std::optional<ClassLabel>(); };
    CHECK_THROWS_AS(bin_samples(make(5000), 5000, missing), LabelingError);
    CHECK_THROWS_AS(bin_samples(make(10), 0, always_left), ConfigError);
}

TEST_CASE("count_frame")
{
    CHECK(count_frame(Sample{}) == CountFrame(36, 36, 0));

    std::vector<DvsEvent> ev(5000, DvsEvent{0, 5, 5, Polarity::on});
    const auto f = count_frame(sample_from(ev));
    CHECK(f.at(5, 5) == 5000);
    int total = 0;
    for (auto c : f.cells)
        total += c;
    CHECK(total == 5000);

    const auto g = count_frame(sample_from({{0, 0, 0, Polarity::on},
                                            {1, 0, 0, Polarity::on},
                                            {2, 35, 35, Polarity::on},
                                            {3, 35, 35, Polarity::on},
                                            {4, 35, 35, Polarity::on}}));
    CHECK(g.at(0, 0) == 2);
    CHECK(g.at(35, 35) == 3);
}

TEST_CASE("sigma_clip")
{
    const auto zero = sigma_clip(CountFrame(36, 36, 0));
    CHECK(zero.threshold == 0.0);
    CHECK(zero.clipped == CountFrame(36, 36, 0));

    const auto a = sigma_clip(toy({1, 1, 1, 1, 1, 1, 1, 1, 1, 91}));
    CHECK(a.threshold == doctest::Approx(81.0));
    CHECK(a.level == 81);
    CHECK(a.clipped.cells.back() == 81);
    CHECK(a.clipped.cells.front() == 1);

    const auto b = sigma_clip(toy({0, 0, 0, 8}));
    CHECK(b.threshold == doctest::Approx(3.0 * std::sqrt(12.0)));
    CHECK(b.level == 10);
    CHECK(b.clipped.cells == std::vector<std::int32_t>{0, 0, 0, 8});

    // Constant frames have no outliers and stay untouched.
    const auto c = sigma_clip(toy({4, 4, 4}));
    CHECK_FALSE(c.level.has_value());
    CHECK(c.clipped.cells == std::vector<std::int32_t>{4, 4, 4});
}

TEST_CASE("sigma_clip level equals floor(3 sigma) computed in long double")
{
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial)
    {
        CountFrame f(36, 36, 0);
        for (auto& c : f.cells)
            c = rng.bernoulli(0.2) ? static_cast<std::int32_t>(rng.uniform_int(60)) : 0;
        long double mean = 0, var = 0;
        for (auto c : f.cells)
            mean += c;
        mean /= f.size();
        for (auto c : f.cells)
            var += (c - mean) * (c - mean);
        var /= f.size();
        const auto r = sigma_clip(f);
        if (var == 0)
            continue;
        CHECK(*r.level == static_cast<std::int32_t>(std::floor(3.0L * std::sqrt(var))));
    }
}

TEST_CASE("filter_outlier_events")
{
    // three lone events among 1293 empty cells: floor(3 sigma) = 0 clears them
    Sample sparse = sample_from({{0, 1, 1, Polarity::on}, {1, 2, 1, Polarity::on}, {2, 3, 1, Polarity::on}});
    CHECK(filter_outlier_events(sparse).events.empty());

    // every pixel once: sigma 0, nothing removed
    std::vector<DvsEvent> all;
    for (int y = 0; y < 36; ++y)
        for (int x = 0; x < 36; ++x)
            all.push_back({y * 36 + x, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), Polarity::on});
    Sample uniform = sample_from(all);
    CHECK(filter_outlier_events(uniform).events == uniform.events);
}

TEST_CASE("toy 10-pixel grid keeps the earliest 81 events of the hot pixel")
{
    // Counts {1 x 9, 91} on a 10x1 geometry: sigma 27, threshold 81.
    const Geometry row{10, 1};
    std::vector<DvsEvent> ev;
    std::int64_t t = 0;
    for (int i = 0; i < 45; ++i)
        ev.push_back({t++, 9, 0, Polarity::on});
    for (int i = 0; i < 9; ++i)
        ev.push_back({t++, static_cast<std::uint16_t>(i), 0, Polarity::on});
    for (int i = 0; i < 46; ++i)
        ev.push_back({t++, 9, 0, Polarity::on});
    const auto out = filter_outlier_events(ev, row);
    CHECK(out.size() == 9 + 81);
    std::vector<std::int64_t> hot_times;
    for (const auto& e : out)
        if (e.x == 9)
            hot_times.push_back(e.timestamp_us);
    REQUIRE(hot_times.size() == 81);
    // The first 45 hot events precede the nine cold ones; the hot pixel keeps
    // those plus the next 36 in stream order.
    CHECK(hot_times[44] == 44);
    CHECK(hot_times[45] == 54);
    CHECK(hot_times.back() == 54 + 35);
    CHECK(count_frame(out, row) == sigma_clip(count_frame(ev, row)).clipped);
}

TEST_CASE("stream filtering agrees with frame clipping on random samples")
{
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial)
    {
        const auto s = random_sample(rng, 500 + static_cast<int>(rng.uniform_int(4500)));
        const auto filtered = filter_outlier_events(s);
        CHECK(count_frame(filtered) == sigma_clip(count_frame(s)).clipped);
        CHECK(filtered.events.size() <= s.events.size());
        CHECK(std::is_sorted(filtered.events.begin(), filtered.events.end(),
                             [](const auto& a, const auto& b) { return a.timestamp_us < b.timestamp_us; }));
    }
}

TEST_CASE("scale_frame")
{
    CHECK(scale_frame(CountFrame(36, 36, 0)) == Frame(36, 36, 0.0f));
    const auto f = scale_frame(toy({2, 4}));
    CHECK(f.cells == std::vector<float>{0.5f, 1.0f});
}

TEST_CASE("make_training_frame")
{
    std::vector<DvsEvent> ev(5000, DvsEvent{0, 7, 9, Polarity::on});
    for (auto order : {NormOrder::clip_first, NormOrder::scale_first})
    {
        const auto f = make_training_frame(sample_from(ev), order);
        CHECK(f.at(7, 9) == 1.0f);
        float rest = 0;
        for (auto v : f.cells)
            rest += v;
        CHECK(rest == 1.0f);
    }

    std::vector<DvsEvent> uniform;
    for (int y = 0; y < 36; ++y)
        for (int x = 0; x < 36; ++x)
            for (int k = 0; k < 3; ++k)
                uniform.push_back({0, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), Polarity::on});
    for (auto order : {NormOrder::clip_first, NormOrder::scale_first})
        CHECK(make_training_frame(sample_from(uniform), order) == Frame(36, 36, 1.0f));
}

TEST_CASE("clip-first frames are rationals over the post-clip maximum, in [0, 1] with max 1")
{
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial)
    {
        const auto s = random_sample(rng, 5000);
        const auto clipped = sigma_clip(count_frame(s)).clipped;
        const auto max = *std::max_element(clipped.cells.begin(), clipped.cells.end());
        for (auto order : {NormOrder::clip_first, NormOrder::scale_first})
        {
            const auto f = make_training_frame(s, order);
            CHECK(*std::max_element(f.cells.begin(), f.cells.end()) == 1.0f);
            CHECK(*std::min_element(f.cells.begin(), f.cells.end()) >= 0.0f);
        }
        const auto f = make_training_frame(s, NormOrder::clip_first);
        for (std::size_t i = 0; i < f.size(); ++i)
            CHECK(f.cells[i] == static_cast<float>(static_cast<double>(clipped.cells[i]) / max));
    }
}
