// core/include/mgf/io_util.hpp
//
// Small file and formatting helpers shared by probes, tools, and tests:
// whole-file reads, atomic writes, SHA-256 content ids, the .arr array
// container (shape header + little-endian doubles), and full-precision
// number formatting for CSV output.

#ifndef MGF_IO_UTIL_HPP_
#define MGF_IO_UTIL_HPP_

#include <string>

#include "mgf/array.hpp"

namespace mgf::io {

// Whole file as bytes; throws "cannot open <path>".
std::string read_file(const std::string& path);

// Write via <path>.tmp + rename so readers never see a partial file.
// Creates parent directories.
void atomic_write(const std::string& path, const std::string& bytes);

// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// .arr container: "MGFA", u64 ndim, u64 dims[ndim], f64 values, all
// little-endian. Round-trips bit-exactly.
void write_array_file(const std::string& path, const Array& a);
Array read_array_file(const std::string& path);

// Shortest round-trip decimal form (%.17g).
std::string g17(double v);

}  // namespace mgf::io

#endif  // MGF_IO_UTIL_HPP_
