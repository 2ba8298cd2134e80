// core/src/io_util.cc

#include "mgf/io_util.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mgf/error.hpp"

namespace mgf::io {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void atomic_write(const std::string& path, const std::string& bytes) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                  nullptr))
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  return sha256_hex(read_file(path));
}

namespace {

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint64_t get_u64(const std::string& data, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos + i]))
         << (8 * i);
  return v;
}

}  // namespace

void write_array_file(const std::string& path, const Array& a) {
  std::string out = "MGFA";
  put_u64(out, static_cast<uint64_t>(a.shape().size()));
  for (int64_t d : a.shape()) put_u64(out, static_cast<uint64_t>(d));
  for (int64_t i = 0; i < a.numel(); ++i) put_f64(out, a.at(i));
  atomic_write(path, out);
}

Array read_array_file(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 12 || data.substr(0, 4) != "MGFA")
    throw Error("not an .arr file: " + path);
  size_t pos = 4;
  auto need = [&](size_t n) {
    if (pos + n > data.size()) throw Error("corrupt .arr file: " + path);
  };
  need(8);
  uint64_t ndim = get_u64(data, pos);
  pos += 8;
  if (ndim > 8) throw Error("corrupt .arr file: " + path);
  std::vector<int64_t> dims;
  uint64_t count = 1;
  for (uint64_t i = 0; i < ndim; ++i) {
    need(8);
    uint64_t d = get_u64(data, pos);
    pos += 8;
    if (d > (1ull << 32)) throw Error("corrupt .arr file: " + path);
    dims.push_back(static_cast<int64_t>(d));
    count *= d;
  }
  need(8 * count);
  Array a(dims);
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t bits = get_u64(data, pos);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    a.at(static_cast<int64_t>(i)) = v;
  }
  if (pos != data.size()) throw Error("corrupt .arr file: " + path);
  return a;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mgf::io
