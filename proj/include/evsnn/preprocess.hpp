#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "evsnn/aedat.hpp"
#include "evsnn/labels.hpp"

namespace evsnn {

template <typename T>
struct Grid
{
    int width = 0;
    int height = 0;
    std::vector<T> cells;  // row-major, index y * width + x

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return cells.size(); }

    bool operator==(const Grid&) const = default;
};

using CountFrame = Grid<std::int32_t>;
using Frame = Grid<float>;

enum class SubsampleMode { max, sum };
enum class NormOrder { clip_first, scale_first };

std::string_view to_string(SubsampleMode mode);
std::string_view to_string(NormOrder order);
SubsampleMode parse_subsample_mode(std::string_view text);
NormOrder parse_norm_order(std::string_view text);

inline constexpr int kSampleEvents = 5000;

/// One classification unit: a window of consecutive subsampled events.
struct Sample
{
    std::vector<DvsEvent> events;  // 36x36 geometry
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    ClassLabel label = ClassLabel::invisible;
};

std::pair<int, int> map_coords(int x, int y, Geometry src, Geometry dst);

/// Maps a sensor stream onto the 36x36 grid and rectifies polarity to ON.
/// MAX mode keeps one event per target pixel among events whose timestamps
/// lie within `dedupe_window_us` of the last kept one (0 = identical
/// timestamps only); SUM keeps everything.
EventStream subsample_stream(const EventStream& stream, SubsampleMode mode, std::int64_t dedupe_window_us = 0);

/// Consecutive non-overlapping windows of exactly `n` events; the remainder
/// is dropped. Labels come from `labels` evaluated at each window's last
/// event; a missing label raises LabelingError.
std::vector<Sample> bin_samples(const EventStream& stream, int n, const LabelSource& labels);

CountFrame count_frame(std::span<const DvsEvent> events, Geometry geometry = kSubsampledGeometry);
inline CountFrame count_frame(const Sample& sample) { return count_frame(sample.events); }

struct ClipResult
{
    CountFrame clipped;
    double threshold = 0.0;            // 3 * population std over all cells
    std::optional<std::int32_t> level;  // floor(threshold); empty when the frame is constant
};

ClipResult sigma_clip(const CountFrame& frame);

/// Drops, at each pixel whose count exceeds the clip level, every event after
/// the earliest `level` ones.
Sample filter_outlier_events(const Sample& sample);
std::vector<DvsEvent> filter_outlier_events(std::span<const DvsEvent> events, Geometry geometry);

Frame scale_frame(const CountFrame& frame);
Frame make_training_frame(const Sample& sample, NormOrder order);

}  // namespace evsnn
