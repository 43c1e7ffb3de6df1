#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "wsolab/errors.hpp"

// Little-endian binary stream helpers shared by the HURAW1 and checkpoint
// readers/writers.

namespace wsolab::binio {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

template <class T>
void write_le(std::ostream& os, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(buf, sizeof(T));
}

template <class T>
T read_le(std::istream& is, const char* what) {
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (!is) throw IoError(std::string("truncated file while reading ") + what);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
    const auto len = read_le<std::uint16_t>(is, what);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw IoError(std::string("truncated file while reading ") + what);
    return s;
}

}  // namespace wsolab::binio
