#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsnn/ann.hpp"
#include "evsnn/convert.hpp"
#include "evsnn/preprocess.hpp"

namespace evsnn {

/// Model file: JSON text.
///   format "evsnn-model", version 1, arch {input [h, w, c], layers [...]},
///   flatten_order, use_biases, layers [{weights [...], biases [...]}] in
///   the layouts of LayerParams (trained, not rescaled), and an optional
///   conversion section {lambda [...], percentile, threshold,
///   calibration_frames, calibration_fingerprint (16 hex digits)}.
struct ModelFile
{
    NetworkParams params;
    std::optional<ConversionInfo> conversion;
    double threshold = 1.0;

    /// Rescales with the stored lambdas and builds the spiking network.
    SpikingNetwork spiking() const;
};

inline constexpr int kModelVersion = 1;

std::string format_model(const ModelFile& model);
ModelFile parse_model(const std::string& text);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

/// Frame set: "DVSFRAME", u32 version, u32 count, u32 height, u32 width,
/// then per frame height*width float32 (row-major) and one label byte.
/// All integers and floats little-endian.
inline constexpr std::uint32_t kFramesVersion = 1;

std::vector<std::uint8_t> encode_frames(std::span<const LabeledFrame> frames);
std::vector<LabeledFrame> decode_frames(std::span<const std::uint8_t> bytes);
void save_frames(const std::filesystem::path& path, std::span<const LabeledFrame> frames);
std::vector<LabeledFrame> load_frames(const std::filesystem::path& path);

/// Sample set: "DVSSAMPL", u32 version, u32 count, then per sample u8
/// label, i64 start_us, i64 end_us, u32 n, and n events of
/// (i64 timestamp_us, u16 x, u16 y, u8 polarity). Little-endian.
inline constexpr std::uint32_t kSamplesVersion = 1;

std::vector<std::uint8_t> encode_samples(std::span<const Sample> samples);
std::vector<Sample> decode_samples(std::span<const std::uint8_t> bytes);
void save_samples(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// FNV-1a of a file's bytes, as 16 hex digits (used in manifests).
std::string file_fingerprint(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

}  // namespace evsnn
