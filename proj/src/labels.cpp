#include "evsnn/labels.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "evsnn/errors.hpp"

namespace evsnn {

std::string_view to_string(ClassLabel label)
{
    switch (label)
    {
        case ClassLabel::left: return "LEFT";
        case ClassLabel::center: return "CENTER";
        case ClassLabel::right: return "RIGHT";
        case ClassLabel::invisible: return "INVISIBLE";
    }
    return "?";
}

ClassLabel parse_label(std::string_view text)
{
    for (auto l : kAllLabels)
        if (text == to_string(l))
            return l;
    throw ConfigError("unknown class label '" + std::string(text) + "'");
}

ClassLabel label_from_index(int index)
{
    if (index < 0 || index >= kNumClasses)
        throw RangeError("class index " + std::to_string(index) + " out of range");
    return static_cast<ClassLabel>(index);
}

LabelTrack::LabelTrack(std::vector<LabelInterval> intervals) : intervals_(std::move(intervals))
{
    std::int64_t expected = 0;
    for (const auto& iv : intervals_)
    {
        if (iv.start_us != expected || iv.end_us <= iv.start_us)
            throw ConfigError("label intervals must be contiguous, non-empty and start at 0");
        expected = iv.end_us;
    }
}

std::optional<ClassLabel> LabelTrack::lookup(std::int64_t t_us) const
{
    if (intervals_.empty() || t_us < 0 || t_us > duration())
        return std::nullopt;
    auto it = std::upper_bound(intervals_.begin(), intervals_.end(), t_us,
                               [](std::int64_t t, const LabelInterval& iv) { return t < iv.end_us; });
    if (it == intervals_.end())
        return intervals_.back().label;
    return it->label;
}

ClassLabel LabelTrack::label_at(std::int64_t t_us) const
{
    if (auto l = lookup(t_us))
        return *l;
    throw RangeError("time " + std::to_string(t_us) + " us outside label track [0, " + std::to_string(duration()) +
                     "]");
}

std::string format_label_track(const LabelTrack& track)
{
    std::ostringstream out;
    for (const auto& iv : track.intervals())
        out << iv.start_us << ' ' << iv.end_us << ' ' << to_string(iv.label) << '\n';
    return out.str();
}

LabelTrack parse_label_track(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::vector<LabelInterval> intervals;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream fields(line);
        LabelInterval iv;
        std::string name;
        if (!(fields >> iv.start_us >> iv.end_us >> name))
            throw ConfigError("label track line " + std::to_string(lineno) + " is not 'start_us end_us label'");
        iv.label = parse_label(name);
        intervals.push_back(iv);
    }
    return LabelTrack(std::move(intervals));
}

LabelTrack read_label_track(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_label_track(buf.str());
}

void write_label_track(const std::filesystem::path& path, const LabelTrack& track)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << format_label_track(track);
}

}  // namespace evsnn
