#include "evsnn/aedat.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "evsnn/errors.hpp"

namespace evsnn {

namespace {

constexpr std::string_view kCanonicalHeader[] = {
    "#!AER-DAT2.0",
    "# This is a raw AE data file - do not edit",
    "# Data format is int32 address, int32 timestamp (8 bytes total), repeated for each event",
    "# Timestamps tick is 1 us",
    "# AEChip: DAVIS240 (DVS events only)",
    "#!END-HEADER",
};

std::uint32_t load_be32(const std::uint8_t* p)
{
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void store_be32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

DecodedAddress decode_address(std::uint32_t word)
{
    using namespace address_bits;
    if (word & kTypeFlag)
        throw MalformedAddressError(word);
    DecodedAddress a;
    a.y = static_cast<int>((word >> kYShift) & kYMask);
    a.x = static_cast<int>((word >> kXShift) & kXMask);
    a.polarity = ((word >> kPolarityShift) & 1u) ? Polarity::on : Polarity::off;
    if (!kSensorGeometry.contains(a.x, a.y))
        throw MalformedAddressError(word);
    return a;
}

std::uint32_t encode_address(int x, int y, Polarity polarity)
{
    using namespace address_bits;
    if (!kSensorGeometry.contains(x, y))
        throw RangeError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") outside 240x180 sensor");
    return (static_cast<std::uint32_t>(y) << kYShift) | (static_cast<std::uint32_t>(x) << kXShift) |
           (polarity == Polarity::on ? 1u << kPolarityShift : 0u);
}

EventStream read_stream(std::span<const std::uint8_t> bytes)
{
    EventStream stream;
    stream.geometry = kSensorGeometry;

    std::size_t pos = 0;
    while (pos < bytes.size() && bytes[pos] == '#')
    {
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n')
            ++end;
        if (end == bytes.size())
            throw ParseError("unterminated header line", pos);
        std::string line(reinterpret_cast<const char*>(bytes.data() + pos), end - pos);
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        pos = end + 1;
        const bool last = line == "#!END-HEADER";
        stream.header.push_back(std::move(line));
        if (last)
            break;
    }

    const std::size_t body = bytes.size() - pos;
    if (body % 8 != 0)
        throw ParseError("truncated event record", pos + (body / 8) * 8);

    stream.events.reserve(body / 8);
    std::int64_t previous = std::numeric_limits<std::int64_t>::min();
    for (; pos < bytes.size(); pos += 8)
    {
        const std::uint32_t word = load_be32(bytes.data() + pos);
        const std::uint32_t ts = load_be32(bytes.data() + pos + 4);
        DecodedAddress a;
        try
        {
            a = decode_address(word);
        }
        catch (const MalformedAddressError& e)
        {
            throw ParseError(e.what(), pos);
        }
        if (ts < previous)
            throw ParseError("timestamp decreases", pos + 4);
        previous = ts;
        stream.events.push_back(
            {ts, static_cast<std::uint16_t>(a.x), static_cast<std::uint16_t>(a.y), a.polarity});
    }
    return stream;
}

std::vector<std::uint8_t> write_stream(const EventStream& stream)
{
    if (stream.geometry != kSensorGeometry)
        throw UnsupportedGeometryError("AEDAT output requires the 240x180 sensor geometry, got " +
                                       std::to_string(stream.geometry.width) + "x" +
                                       std::to_string(stream.geometry.height));
    std::vector<std::uint8_t> out;
    for (auto line : kCanonicalHeader)
    {
        out.insert(out.end(), line.begin(), line.end());
        out.push_back('\r');
        out.push_back('\n');
    }
    out.reserve(out.size() + 8 * stream.events.size());
    std::int64_t previous = 0;
    for (const auto& e : stream.events)
    {
        if (e.timestamp_us < previous || e.timestamp_us > std::numeric_limits<std::uint32_t>::max())
            throw RangeError("event timestamp " + std::to_string(e.timestamp_us) +
                             " not representable or out of order");
        previous = e.timestamp_us;
        store_be32(out, encode_address(e.x, e.y, e.polarity));
        store_be32(out, static_cast<std::uint32_t>(e.timestamp_us));
    }
    return out;
}

EventStream read_stream_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_stream(bytes);
}

void write_stream_file(const std::filesystem::path& path, const EventStream& stream)
{
    const auto bytes = write_stream(stream);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

}  // namespace evsnn
