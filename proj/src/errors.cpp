#include "evsnn/errors.hpp"

#include <cstdio>

namespace evsnn {

namespace {

std::string hex_word(std::uint32_t word)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", word);
    return buf;
}

}  // namespace

MalformedAddressError::MalformedAddressError(std::uint32_t word)
    : Error(ErrorKind::parse, "malformed DVS address word " + hex_word(word)), word_(word)
{
}

const char* to_string(ErrorKind kind)
{
    switch (kind)
    {
        case ErrorKind::parse: return "parse";
        case ErrorKind::range: return "range";
        case ErrorKind::config: return "config";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::labeling: return "labeling";
        case ErrorKind::unsupported: return "unsupported";
        case ErrorKind::build: return "build";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace evsnn
