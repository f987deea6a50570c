#pragma once

#include <cstdint>
#include <optional>

#include "evsnn/aedat.hpp"
#include "evsnn/labels.hpp"

namespace evsnn {

struct BurstConfig
{
    std::int64_t period_us = 8000;
    double rate_multiplier = 4.0;
    std::int64_t length_us = 1500;
};

/// Scene of one contour-emitting blob moving over a noisy 240x180 sensor.
///
/// Scene state advances in 1 ms steps: visibility transitions first, then the
/// blob heading takes a uniform random turn and the blob moves `blob_speed`
/// pixels, reflecting off the borders. Events inside the step form a Poisson
/// process. A blob arrival emits `cluster_size` events sharing one timestamp
/// (the first on the contour, the rest jittered by up to `cluster_spread`
/// pixels), modelling the simultaneous readout of neighbouring pixels; noise
/// arrivals emit one uniformly placed event. Burst windows multiply every
/// rate and are evaluated at 1 ms resolution.
struct SceneConfig
{
    std::int64_t duration_us = 20'000'000;
    double blob_radius = 14.0;
    double blob_rate = 0.15;   // events per us, while visible
    double noise_rate = 0.03;  // events per us over the whole sensor
    double blob_speed = 0.12;  // pixels per ms
    double turn_rate = 0.08;   // max heading change per ms, radians
    double offscreen_probability = 0.0004;  // per ms, visible -> off-screen
    double return_probability = 0.0015;     // per ms, off-screen -> visible
    int cluster_size = 3;
    int cluster_spread = 1;
    std::optional<double> start_x;  // initial blob centre; random when unset
    std::optional<double> start_y;
    std::optional<BurstConfig> bursts;
    std::uint64_t seed = 1;
};

struct Recording
{
    EventStream stream;
    LabelTrack labels;
};

/// Label for a visible blob centre: thirds [0,80), [80,160), [160,240).
ClassLabel third_of(double center_x);

Recording generate_recording(const SceneConfig& config);

inline ClassLabel label_at(const LabelTrack& track, std::int64_t t_us) { return track.label_at(t_us); }

}  // namespace evsnn
