#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evsnn {

enum class ClassLabel : std::uint8_t { left = 0, center = 1, right = 2, invisible = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels{ClassLabel::left, ClassLabel::center,
                                                                 ClassLabel::right, ClassLabel::invisible};

std::string_view to_string(ClassLabel label);
ClassLabel parse_label(std::string_view text);
inline int index_of(ClassLabel label) { return static_cast<int>(label); }
ClassLabel label_from_index(int index);

struct LabelInterval
{
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    ClassLabel label = ClassLabel::invisible;

    bool operator==(const LabelInterval&) const = default;
};

/// Contiguous right-open label intervals covering [0, duration]. The final
/// interval also owns t == duration.
class LabelTrack
{
public:
    LabelTrack() = default;
    explicit LabelTrack(std::vector<LabelInterval> intervals);

    const std::vector<LabelInterval>& intervals() const { return intervals_; }
    std::int64_t duration() const { return intervals_.empty() ? 0 : intervals_.back().end_us; }

    std::optional<ClassLabel> lookup(std::int64_t t_us) const;
    ClassLabel label_at(std::int64_t t_us) const;

    bool operator==(const LabelTrack&) const = default;

private:
    std::vector<LabelInterval> intervals_;
};

// Sidecar format: one "start_us end_us label" line per interval.
std::string format_label_track(const LabelTrack& track);
LabelTrack parse_label_track(std::string_view text);
LabelTrack read_label_track(const std::filesystem::path& path);
void write_label_track(const std::filesystem::path& path, const LabelTrack& track);

using LabelSource = std::function<std::optional<ClassLabel>(std::int64_t)>;

}  // namespace evsnn
