#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace evsnn {

enum class Polarity : std::uint8_t { off = 0, on = 1 };

struct Geometry
{
    int width = 0;
    int height = 0;

    int pixels() const { return width * height; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    bool operator==(const Geometry&) const = default;
};

inline constexpr Geometry kSensorGeometry{240, 180};
inline constexpr Geometry kSubsampledGeometry{36, 36};

struct DvsEvent
{
    std::int64_t timestamp_us = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    Polarity polarity = Polarity::off;

    bool operator==(const DvsEvent&) const = default;
};

struct EventStream
{
    Geometry geometry = kSensorGeometry;
    std::vector<DvsEvent> events;
    // Header lines as read (without line terminators). Not part of equality.
    std::vector<std::string> header;

    bool operator==(const EventStream& other) const
    {
        return geometry == other.geometry && events == other.events;
    }
};

struct DecodedAddress
{
    int x = 0;
    int y = 0;
    Polarity polarity = Polarity::off;

    bool operator==(const DecodedAddress&) const = default;
};

// DAVIS240 address word: bit 31 clear for DVS events, y in bits 22-30,
// x in bits 12-21, polarity in bit 11 (1 = ON). Bits 0-10 are ignored.
namespace address_bits {
inline constexpr std::uint32_t kTypeFlag = 1u << 31;
inline constexpr int kYShift = 22;
inline constexpr std::uint32_t kYMask = 0x1FFu;
inline constexpr int kXShift = 12;
inline constexpr std::uint32_t kXMask = 0x3FFu;
inline constexpr int kPolarityShift = 11;
}  // namespace address_bits

DecodedAddress decode_address(std::uint32_t word);
std::uint32_t encode_address(int x, int y, Polarity polarity);

/// Parses an AEDAT 2.0 byte image. Header lines ('#'-prefixed) are kept as
/// opaque strings; a "#!END-HEADER" line terminates the header explicitly.
/// Records are 8 bytes: big-endian address then big-endian timestamp (us).
EventStream read_stream(std::span<const std::uint8_t> bytes);

/// Emits a canonical header followed by the records of `stream`.
std::vector<std::uint8_t> write_stream(const EventStream& stream);

EventStream read_stream_file(const std::filesystem::path& path);
void write_stream_file(const std::filesystem::path& path, const EventStream& stream);

}  // namespace evsnn
