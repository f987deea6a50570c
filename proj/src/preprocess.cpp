#include "evsnn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsnn/errors.hpp"

namespace evsnn {

std::string_view to_string(SubsampleMode mode) { return mode == SubsampleMode::max ? "max" : "sum"; }

std::string_view to_string(NormOrder order) { return order == NormOrder::clip_first ? "clip_first" : "scale_first"; }

SubsampleMode parse_subsample_mode(std::string_view text)
{
    if (text == "max")
        return SubsampleMode::max;
    if (text == "sum")
        return SubsampleMode::sum;
    throw ConfigError("subsample mode must be 'max' or 'sum', got '" + std::string(text) + "'");
}

NormOrder parse_norm_order(std::string_view text)
{
    if (text == "clip_first")
        return NormOrder::clip_first;
    if (text == "scale_first")
        return NormOrder::scale_first;
    throw ConfigError("normalization order must be 'clip_first' or 'scale_first', got '" + std::string(text) + "'");
}

std::pair<int, int> map_coords(int x, int y, Geometry src, Geometry dst)
{
    return {static_cast<int>(static_cast<std::int64_t>(x) * dst.width / src.width),
            static_cast<int>(static_cast<std::int64_t>(y) * dst.height / src.height)};
}

EventStream subsample_stream(const EventStream& stream, SubsampleMode mode, std::int64_t dedupe_window_us)
{
    EventStream out;
    out.geometry = kSubsampledGeometry;
    out.events.reserve(stream.events.size());

    std::vector<std::int64_t> last_kept(static_cast<std::size_t>(kSubsampledGeometry.pixels()), -1);
    for (const auto& e : stream.events)
    {
        const auto [x, y] = map_coords(e.x, e.y, stream.geometry, kSubsampledGeometry);
        if (mode == SubsampleMode::max)
        {
            auto& last = last_kept[static_cast<std::size_t>(y) * kSubsampledGeometry.width + x];
            if (last >= 0 && e.timestamp_us - last <= dedupe_window_us)
                continue;
            last = e.timestamp_us;
        }
        out.events.push_back({e.timestamp_us, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                              Polarity::on});
    }
    return out;
}

std::vector<Sample> bin_samples(const EventStream& stream, int n, const LabelSource& labels)
{
    if (n < 1)
        throw ConfigError("sample size must be at least 1");
    std::vector<Sample> samples;
    const std::size_t count = stream.events.size() / static_cast<std::size_t>(n);
    samples.reserve(count);
    for (std::size_t s = 0; s < count; ++s)
    {
        Sample sample;
        const auto first = stream.events.begin() + static_cast<std::ptrdiff_t>(s * n);
        sample.events.assign(first, first + n);
        sample.start_us = sample.events.front().timestamp_us;
        sample.end_us = sample.events.back().timestamp_us;
        const auto label = labels(sample.end_us);
        if (!label)
            throw LabelingError("no label covers sample ending at " + std::to_string(sample.end_us) + " us");
        sample.label = *label;
        samples.push_back(std::move(sample));
    }
    return samples;
}

CountFrame count_frame(std::span<const DvsEvent> events, Geometry geometry)
{
    CountFrame frame(geometry.width, geometry.height, 0);
    for (const auto& e : events)
        ++frame.at(e.x, e.y);
    return frame;
}

ClipResult sigma_clip(const CountFrame& frame)
{
    ClipResult result{frame, 0.0, std::nullopt};
    const auto n = static_cast<__int128>(frame.size());
    if (n == 0)
        return result;

    __int128 sum = 0;
    __int128 sum_sq = 0;
    for (auto c : frame.cells)
    {
        sum += c;
        sum_sq += static_cast<__int128>(c) * c;
    }
    // population variance = d / n^2
    const __int128 d = n * sum_sq - sum * sum;
    result.threshold = 3.0 * std::sqrt(static_cast<double>(d)) / static_cast<double>(n);
    if (d == 0)
        return result;

    // Exact floor(3 sqrt(d) / n): the largest k with (k n)^2 <= 9 d.
    auto k = static_cast<__int128>(std::floor(result.threshold));
    while (k > 0 && (k * n) * (k * n) > 9 * d)
        --k;
    while (((k + 1) * n) * ((k + 1) * n) <= 9 * d)
        ++k;
    const auto level = static_cast<std::int32_t>(k);
    result.level = level;
    for (auto& c : result.clipped.cells)
        c = std::min(c, level);
    return result;
}

std::vector<DvsEvent> filter_outlier_events(std::span<const DvsEvent> events, Geometry geometry)
{
    const auto clip = sigma_clip(count_frame(events, geometry));
    if (!clip.level)
        return {events.begin(), events.end()};
    const auto level = *clip.level;

    std::vector<DvsEvent> out;
    out.reserve(events.size());
    CountFrame seen(geometry.width, geometry.height, 0);
    for (const auto& e : events)
    {
        auto& c = seen.at(e.x, e.y);
        if (c < level)
            out.push_back(e);
        ++c;
    }
    return out;
}

Sample filter_outlier_events(const Sample& sample)
{
    Sample out;
    out.start_us = sample.start_us;
    out.end_us = sample.end_us;
    out.label = sample.label;
    out.events = filter_outlier_events(sample.events, kSubsampledGeometry);
    return out;
}

Frame scale_frame(const CountFrame& frame)
{
    Frame out(frame.width, frame.height, 0.0f);
    const auto max = frame.cells.empty() ? 0 : *std::max_element(frame.cells.begin(), frame.cells.end());
    if (max <= 0)
        return out;
    for (std::size_t i = 0; i < frame.size(); ++i)
        out.cells[i] = static_cast<float>(static_cast<double>(frame.cells[i]) / max);
    return out;
}

namespace {

// Baseline order: scale to [0, 1], clip real values at 3 sigma, rescale.
Frame scale_then_clip(const CountFrame& counts)
{
    Frame out(counts.width, counts.height, 0.0f);
    const auto max = *std::max_element(counts.cells.begin(), counts.cells.end());
    if (max <= 0)
        return out;
    std::vector<double> v(counts.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        v[i] = static_cast<double>(counts.cells[i]) / max;
        mean += v[i];
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (auto x : v)
        var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    if (var > 0.0)
    {
        const double threshold = 3.0 * std::sqrt(var);
        for (auto& x : v)
            x = std::min(x, threshold);
    }
    const double top = *std::max_element(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size(); ++i)
        out.cells[i] = static_cast<float>(v[i] / top);
    return out;
}

}  // namespace

Frame make_training_frame(const Sample& sample, NormOrder order)
{
    const auto counts = count_frame(sample);
    if (order == NormOrder::clip_first)
        return scale_frame(sigma_clip(counts).clipped);
    return scale_then_clip(counts);
}

}  // namespace evsnn
