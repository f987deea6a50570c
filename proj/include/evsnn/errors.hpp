#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evsnn {

// Broad failure categories; the CLI maps each to its own exit status.
enum class ErrorKind { parse, range, config, numeric, labeling, unsupported, build, io };

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public Error
{
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(ErrorKind::parse, what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset)
    {
    }

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class MalformedAddressError : public Error
{
public:
    explicit MalformedAddressError(std::uint32_t word);

    std::uint32_t word() const noexcept { return word_; }

private:
    std::uint32_t word_;
};

struct RangeError : Error
{
    explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};

struct ConfigError : Error
{
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct NumericError : Error
{
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct LabelingError : Error
{
    explicit LabelingError(const std::string& what) : Error(ErrorKind::labeling, what) {}
};

struct UnsupportedGeometryError : Error
{
    explicit UnsupportedGeometryError(const std::string& what) : Error(ErrorKind::unsupported, what) {}
};

// An input sample that cannot be simulated (no events).
struct DegenerateSampleError : Error
{
    explicit DegenerateSampleError(const std::string& what) : Error(ErrorKind::range, what) {}
};

struct BuildError : Error
{
    explicit BuildError(const std::string& what) : Error(ErrorKind::build, what) {}
};

struct IoError : Error
{
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

// A layer whose calibration activations are all zero cannot be rescaled.
class DeadLayerError : public NumericError
{
public:
    DeadLayerError(std::size_t layer, const std::string& name)
        : NumericError("layer " + std::to_string(layer) + " (" + name + ") has zero activation scale"), layer_(layer)
    {
    }

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

const char* to_string(ErrorKind kind);

}  // namespace evsnn
