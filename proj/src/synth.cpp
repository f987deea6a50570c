#include "evsnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

namespace {

constexpr std::int64_t kStepUs = 1000;

struct Blob
{
    double x = 0, y = 0, heading = 0;
    bool visible = true;
};

void place_randomly(Blob& b, double r, Rng& rng)
{
    b.x = rng.uniform(r, kSensorGeometry.width - r);
    b.y = rng.uniform(r, kSensorGeometry.height - r);
    b.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
}

void reflect(double& pos, double& dir_component, double lo, double hi)
{
    if (pos < lo)
    {
        pos = 2 * lo - pos;
        dir_component = -dir_component;
    }
    else if (pos > hi)
    {
        pos = 2 * hi - pos;
        dir_component = -dir_component;
    }
    pos = std::clamp(pos, lo, hi);
}

DvsEvent make_event(std::int64_t t, double x, double y, Rng& rng)
{
    const int px = std::clamp(static_cast<int>(std::lround(x)), 0, kSensorGeometry.width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(y)), 0, kSensorGeometry.height - 1);
    return {t, static_cast<std::uint16_t>(px), static_cast<std::uint16_t>(py),
            rng.bernoulli(0.5) ? Polarity::on : Polarity::off};
}

}  // namespace

ClassLabel third_of(double center_x)
{
    if (center_x < 80.0)
        return ClassLabel::left;
    if (center_x < 160.0)
        return ClassLabel::center;
    return ClassLabel::right;
}

Recording generate_recording(const SceneConfig& config)
{
    if (config.duration_us <= 0)
        throw ConfigError("scene duration must be positive");
    if (config.blob_rate < 0 || config.noise_rate < 0 || config.blob_speed < 0 || config.blob_radius < 0)
        throw ConfigError("scene rates, speed and radius must be non-negative");
    if (config.cluster_size < 1 || config.cluster_spread < 0)
        throw ConfigError("cluster size must be >= 1 and spread >= 0");
    if (config.bursts && (config.bursts->period_us <= 0 || config.bursts->rate_multiplier < 0))
        throw ConfigError("burst period must be positive and multiplier non-negative");

    Rng rng(config.seed);
    const double r = config.blob_radius;
    const double lo_x = std::min(r, kSensorGeometry.width / 2.0), hi_x = kSensorGeometry.width - lo_x;
    const double lo_y = std::min(r, kSensorGeometry.height / 2.0), hi_y = kSensorGeometry.height - lo_y;

    Blob blob;
    place_randomly(blob, r, rng);
    if (config.start_x)
        blob.x = *config.start_x;
    if (config.start_y)
        blob.y = *config.start_y;

    Recording rec;
    rec.stream.geometry = kSensorGeometry;
    std::vector<LabelInterval> intervals;
    const double cluster_rate = config.blob_rate / config.cluster_size;

    for (std::int64_t step_start = 0; step_start < config.duration_us; step_start += kStepUs)
    {
        const std::int64_t step_end = std::min(step_start + kStepUs, config.duration_us);

        if (blob.visible)
        {
            if (rng.bernoulli(config.offscreen_probability))
                blob.visible = false;
        }
        else if (rng.bernoulli(config.return_probability))
        {
            blob.visible = true;
            place_randomly(blob, r, rng);
        }
        if (blob.visible && step_start > 0 && config.blob_speed > 0)
        {
            blob.heading += rng.uniform(-config.turn_rate, config.turn_rate);
            double dx = std::cos(blob.heading), dy = std::sin(blob.heading);
            blob.x += config.blob_speed * dx;
            blob.y += config.blob_speed * dy;
            reflect(blob.x, dx, lo_x, hi_x);
            reflect(blob.y, dy, lo_y, hi_y);
            blob.heading = std::atan2(dy, dx);
        }

        const ClassLabel label = blob.visible ? third_of(blob.x) : ClassLabel::invisible;
        if (!intervals.empty() && intervals.back().label == label)
            intervals.back().end_us = step_end;
        else
            intervals.push_back({step_start, step_end, label});

        double multiplier = 1.0;
        if (config.bursts && (step_start % config.bursts->period_us) < config.bursts->length_us)
            multiplier = config.bursts->rate_multiplier;

        const double blob_arrivals = blob.visible ? cluster_rate * multiplier : 0.0;
        const double noise_arrivals = config.noise_rate * multiplier;
        const double total = blob_arrivals + noise_arrivals;
        if (total <= 0.0)
            continue;

        double t = static_cast<double>(step_start);
        while (true)
        {
            t += rng.exponential(total);
            if (t >= static_cast<double>(step_end))
                break;
            const auto ts = static_cast<std::int64_t>(t);
            if (rng.uniform() * total < blob_arrivals)
            {
                const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double ex = blob.x + r * std::cos(angle);
                const double ey = blob.y + r * std::sin(angle);
                rec.stream.events.push_back(make_event(ts, ex, ey, rng));
                const auto span = static_cast<std::uint64_t>(2 * config.cluster_spread + 1);
                for (int k = 1; k < config.cluster_size; ++k)
                {
                    const double jx = static_cast<double>(rng.uniform_int(span)) - config.cluster_spread;
                    const double jy = static_cast<double>(rng.uniform_int(span)) - config.cluster_spread;
                    rec.stream.events.push_back(make_event(ts, ex + jx, ey + jy, rng));
                }
            }
            else
            {
                const double ex = static_cast<double>(rng.uniform_int(kSensorGeometry.width));
                const double ey = static_cast<double>(rng.uniform_int(kSensorGeometry.height));
                rec.stream.events.push_back(make_event(ts, ex, ey, rng));
            }
        }
    }
    rec.labels = LabelTrack(std::move(intervals));
    return rec;
}

}  // namespace evsnn
