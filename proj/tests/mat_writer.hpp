#pragma once

// Test-only writer for MATLAB level-5 files in the layout of the Paderborn
// recordings: a 1x1 struct with a `Y` struct array of named channels.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

namespace sdalr::testing {

class MatBytes {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void pad() {
    while (bytes.size() % 8) bytes.push_back(0);
  }
  // Full-size tag + payload + padding.
  void element(std::uint32_t type, const void* p, std::size_t n) {
    u32(type);
    u32(static_cast<std::uint32_t>(n));
    raw(p, n);
    pad();
  }
  std::vector<std::uint8_t> bytes;
};

inline constexpr std::uint32_t kInt8 = 1, kUint16 = 4, kInt32 = 5, kUint32 = 6, kSingle = 7, kDouble = 9,
                               kMatrix = 14, kCompressed = 15;

inline std::vector<std::uint8_t> matrix_header(std::uint8_t cls, std::vector<std::int32_t> dims,
                                               const std::string& name) {
  MatBytes b;
  std::uint32_t flags[2] = {cls, 0};
  b.element(kUint32, flags, 8);
  b.element(kInt32, dims.data(), dims.size() * 4);
  b.element(kInt8, name.data(), name.size());
  return b.bytes;
}

inline std::vector<std::uint8_t> wrap_matrix(const std::vector<std::uint8_t>& body) {
  MatBytes b;
  b.u32(kMatrix);
  b.u32(static_cast<std::uint32_t>(body.size()));
  b.raw(body.data(), body.size());
  return b.bytes;
}

inline std::vector<std::uint8_t> double_row(const std::vector<double>& v, const std::string& name = "") {
  auto body = matrix_header(6, {1, static_cast<std::int32_t>(v.size())}, name);
  MatBytes b;
  b.element(kDouble, v.data(), v.size() * 8);
  body.insert(body.end(), b.bytes.begin(), b.bytes.end());
  return wrap_matrix(body);
}

inline std::vector<std::uint8_t> single_row(const std::vector<float>& v) {
  auto body = matrix_header(7, {1, static_cast<std::int32_t>(v.size())}, "");
  MatBytes b;
  b.element(kSingle, v.data(), v.size() * 4);
  body.insert(body.end(), b.bytes.begin(), b.bytes.end());
  return wrap_matrix(body);
}

inline std::vector<std::uint8_t> char_row(const std::string& s) {
  auto body = matrix_header(4, {1, static_cast<std::int32_t>(s.size())}, "");
  std::vector<std::uint16_t> wide(s.begin(), s.end());
  MatBytes b;
  b.element(kUint16, wide.data(), wide.size() * 2);
  body.insert(body.end(), b.bytes.begin(), b.bytes.end());
  return wrap_matrix(body);
}

/// 1xN struct array; `elements[i]` lists (field, encoded matrix) in field order.
inline std::vector<std::uint8_t> struct_array(
    const std::string& name, const std::vector<std::string>& fields,
    const std::vector<std::vector<std::vector<std::uint8_t>>>& elements) {
  auto body = matrix_header(2, {1, static_cast<std::int32_t>(elements.size())}, name);
  MatBytes b;
  // Field-name length as a small data element.
  const std::uint32_t len = 32;
  b.u32((4u << 16) | kInt32);
  b.u32(len);
  std::vector<char> names(fields.size() * len, 0);
  for (std::size_t f = 0; f < fields.size(); ++f) std::memcpy(names.data() + f * len, fields[f].data(), fields[f].size());
  b.element(kInt8, names.data(), names.size());
  for (const auto& el : elements) {
    for (const auto& m : el) b.raw(m.data(), m.size());
  }
  body.insert(body.end(), b.bytes.begin(), b.bytes.end());
  return wrap_matrix(body);
}

struct Channel {
  std::string name;
  std::vector<double> data;
  bool as_single = false;
};

/// One top-level variable `var` = struct(Info, Y) where Y is a 1xK struct
/// array with Name/Data fields.
inline void write_pu_mat(const std::filesystem::path& path, const std::string& var,
                         const std::vector<Channel>& channels, bool compress) {
  std::vector<std::vector<std::vector<std::uint8_t>>> y;
  for (const auto& ch : channels) {
    std::vector<float> f(ch.data.begin(), ch.data.end());
    y.push_back({char_row(ch.name), ch.as_single ? single_row(f) : double_row(ch.data)});
  }
  const auto y_arr = struct_array("", {"Name", "Data"}, y);
  const auto top = struct_array(var, {"Info", "Y"}, {{char_row("synthetic"), y_arr}});

  std::vector<std::uint8_t> payload = top;
  if (compress) {
    uLongf n = compressBound(static_cast<uLong>(top.size()));
    std::vector<std::uint8_t> z(n);
    compress2(z.data(), &n, top.data(), static_cast<uLong>(top.size()), 6);
    z.resize(n);
    MatBytes b;
    b.u32(kCompressed);
    b.u32(static_cast<std::uint32_t>(z.size()));
    b.raw(z.data(), z.size());
    payload = b.bytes;
  }

  std::vector<char> header(128, ' ');
  const std::string text = "MATLAB 5.0 MAT-file, test fixture";
  std::memcpy(header.data(), text.data(), text.size());
  std::memset(header.data() + 116, 0, 8);
  header[124] = 0x00;
  header[125] = 0x01;
  header[126] = 'I';
  header[127] = 'M';
  std::ofstream out(path, std::ios::binary);
  out.write(header.data(), 128);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace sdalr::testing
