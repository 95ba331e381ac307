#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "mdp/error.hpp"

namespace mdp::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written little-endian; big-endian hosts need byte swapping");

inline void write_magic(std::ostream& os, std::string_view magic)
{
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what)
{
    std::string buf(magic.size(), '\0');
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is) {
        throw FormatError(what + ": truncated header");
    }
    if (buf != magic) {
        throw FormatError(what + ": bad magic (expected \"" + std::string(magic) + "\")");
    }
}

template <class T>
void write_pod(std::ostream& os, T value)
{
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& what)
{
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) {
        throw FormatError(what + ": truncated file");
    }
    return value;
}

} // namespace mdp::io
