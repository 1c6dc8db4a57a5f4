#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpl::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

struct FileFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, sizeof v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, sizeof v); }
inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, sizeof v); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, sizeof v); }

inline void write_f64_array(std::ostream& os, const std::vector<double>& v) {
    write_bytes(os, v.data(), v.size() * sizeof(double));
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw FileFormatError(std::string("truncated file while reading ") + what);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    read_bytes(is, &v, sizeof v, what);
    return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    std::uint64_t v;
    read_bytes(is, &v, sizeof v, what);
    return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
    std::uint8_t v;
    read_bytes(is, &v, sizeof v, what);
    return v;
}

inline double read_f64(std::istream& is, const char* what) {
    double v;
    read_bytes(is, &v, sizeof v, what);
    return v;
}

inline void read_f64_array(std::istream& is, std::vector<double>& v, const char* what) {
    read_bytes(is, v.data(), v.size() * sizeof(double), what);
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const char* what) {
    char buf[8];
    read_bytes(is, buf, 8, what);
    if (std::string(buf, 8) != std::string(magic, 8))
        throw FileFormatError(std::string("bad magic for ") + what);
}

} // namespace cpl::io
