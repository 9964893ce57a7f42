#include "sdalr/mat_file.hpp"

#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>

#include <spdlog/spdlog.h>
#include <zlib.h>

namespace sdalr::mat {
namespace {

// Data element types.
enum : std::uint32_t {
  miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
  miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14,
  miCOMPRESSED = 15, miUTF8 = 16, miUTF16 = 17, miUTF32 = 18,
};

// Array classes.
enum : std::uint8_t {
  mxCELL = 1, mxSTRUCT = 2, mxOBJECT = 3, mxCHAR = 4, mxSPARSE = 5, mxDOUBLE = 6,
  mxSINGLE = 7, mxINT8 = 8, mxUINT8 = 9, mxINT16 = 10, mxUINT16 = 11, mxINT32 = 12,
  mxUINT32 = 13, mxINT64 = 14, mxUINT64 = 15,
};

struct Element {
  std::uint32_t type = 0;
  const std::uint8_t* data = nullptr;
  std::size_t size = 0;
};

class Cursor {
 public:
  Cursor(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  bool done() const { return p_ >= end_; }

  Element next() {
    need(8);
    std::uint32_t first, second;
    std::memcpy(&first, p_, 4);
    std::memcpy(&second, p_ + 4, 4);
    Element e;
    if ((first >> 16) != 0) {
      // Small data element: type and size packed into the first word.
      e.type = first & 0xFFFFu;
      e.size = first >> 16;
      if (e.size > 4) throw std::runtime_error("malformed small data element");
      e.data = p_ + 4;
      p_ += 8;
      return e;
    }
    e.type = first;
    e.size = second;
    p_ += 8;
    need(e.size);
    e.data = p_;
    // Compressed elements are not padded.
    p_ += e.type == miCOMPRESSED ? e.size : (e.size + 7) / 8 * 8;
    if (p_ > end_) p_ = end_;
    return e;
  }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw std::runtime_error("truncated data element");
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

template <typename T>
void append_as_double(const Element& e, std::vector<double>& out) {
  const std::size_t n = e.size / sizeof(T);
  out.reserve(out.size() + n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, e.data + i * sizeof(T), sizeof(T));
    out.push_back(static_cast<double>(v));
  }
}

std::vector<double> to_doubles(const Element& e) {
  std::vector<double> out;
  switch (e.type) {
    case miINT8: append_as_double<std::int8_t>(e, out); break;
    case miUINT8: append_as_double<std::uint8_t>(e, out); break;
    case miINT16: append_as_double<std::int16_t>(e, out); break;
    case miUINT16: append_as_double<std::uint16_t>(e, out); break;
    case miINT32: append_as_double<std::int32_t>(e, out); break;
    case miUINT32: append_as_double<std::uint32_t>(e, out); break;
    case miSINGLE: append_as_double<float>(e, out); break;
    case miDOUBLE: append_as_double<double>(e, out); break;
    case miINT64: append_as_double<std::int64_t>(e, out); break;
    case miUINT64: append_as_double<std::uint64_t>(e, out); break;
    default: throw std::runtime_error("unsupported numeric storage type " + std::to_string(e.type));
  }
  return out;
}

std::string to_text(const Element& e) {
  std::string out;
  if (e.type == miUINT8 || e.type == miINT8 || e.type == miUTF8) {
    out.assign(reinterpret_cast<const char*>(e.data), e.size);
  } else if (e.type == miUINT16 || e.type == miUTF16) {
    for (std::size_t i = 0; i + 1 < e.size; i += 2) {
      std::uint16_t c;
      std::memcpy(&c, e.data + i, 2);
      out.push_back(c < 128 ? static_cast<char>(c) : '?');
    }
  } else {
    throw std::runtime_error("unsupported char storage type " + std::to_string(e.type));
  }
  return out;
}

std::vector<std::uint8_t> inflate_element(const Element& e) {
  std::vector<std::uint8_t> out(std::max<std::size_t>(e.size * 4, 1024));
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw std::runtime_error("zlib init failed");
  zs.next_in = const_cast<Bytef*>(e.data);
  zs.avail_in = static_cast<uInt>(e.size);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (zs.total_out == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + zs.total_out;
    zs.avail_out = static_cast<uInt>(out.size() - zs.total_out);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("corrupt compressed element");
    }
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw std::runtime_error("truncated compressed element");
    }
  }
  out.resize(zs.total_out);
  inflateEnd(&zs);
  return out;
}

Array parse_matrix(const Element& e);

Array parse_matrix_body(Cursor& cur) {
  Array a;
  const Element flags = cur.next();
  if (flags.size < 8) throw std::runtime_error("missing array flags");
  std::uint32_t word;
  std::memcpy(&word, flags.data, 4);
  const std::uint8_t cls = word & 0xFFu;
  const bool complex = (word & 0x0800u) != 0;

  const Element dims = cur.next();
  for (double d : to_doubles(dims)) a.dims.push_back(static_cast<std::uint32_t>(d));
  a.name = to_text(cur.next());

  switch (cls) {
    case mxDOUBLE: case mxSINGLE: case mxINT8: case mxUINT8: case mxINT16: case mxUINT16:
    case mxINT32: case mxUINT32: case mxINT64: case mxUINT64: {
      a.kind = ArrayKind::Numeric;
      a.numeric = to_doubles(cur.next());
      if (complex && !cur.done()) cur.next();  // imaginary part discarded
      break;
    }
    case mxCHAR: {
      a.kind = ArrayKind::Char;
      if (!cur.done()) a.text = to_text(cur.next());
      break;
    }
    case mxSTRUCT: {
      a.kind = ArrayKind::Struct;
      const Element len_el = cur.next();
      const auto len_vals = to_doubles(len_el);
      if (len_vals.empty() || len_vals[0] <= 0) throw std::runtime_error("bad field name length");
      const auto name_len = static_cast<std::size_t>(len_vals[0]);
      const Element names = cur.next();
      for (std::size_t off = 0; off + name_len <= names.size; off += name_len) {
        const char* s = reinterpret_cast<const char*>(names.data + off);
        a.field_names.emplace_back(s, strnlen(s, name_len));
      }
      const std::size_t n = a.element_count();
      a.elements.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (const auto& field : a.field_names) {
          a.elements[i][field] = parse_matrix(cur.next());
        }
      }
      break;
    }
    case mxCELL: {
      a.kind = ArrayKind::Cell;
      const std::size_t n = a.element_count();
      a.elements.resize(n);
      for (std::size_t i = 0; i < n; ++i) a.elements[i][""] = parse_matrix(cur.next());
      break;
    }
    default:
      a.kind = ArrayKind::Unsupported;
      break;
  }
  return a;
}

Array parse_matrix(const Element& e) {
  if (e.type != miMATRIX) throw std::runtime_error("expected matrix element, got type " + std::to_string(e.type));
  if (e.size == 0) return {};
  Cursor cur(e.data, e.size);
  try {
    return parse_matrix_body(cur);
  } catch (const std::exception& ex) {
    spdlog::warn("skipping unparseable MAT array: {}", ex.what());
    return {};
  }
}

}  // namespace

std::size_t Array::element_count() const {
  if (dims.empty()) return 0;
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const Array* Array::field(const std::string& field_name, std::size_t element) const {
  if (element >= elements.size()) return nullptr;
  auto it = elements[element].find(field_name);
  return it == elements[element].end() ? nullptr : &it->second;
}

std::vector<Array> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 128) throw std::runtime_error("file shorter than a MAT header");
  if (bytes[126] != 'I' || bytes[127] != 'M') {
    throw std::runtime_error("not a little-endian level-5 MAT file");
  }

  std::vector<Array> vars;
  Cursor cur(bytes.data() + 128, bytes.size() - 128);
  while (!cur.done()) {
    const Element e = cur.next();
    if (e.type == miCOMPRESSED) {
      const auto raw = inflate_element(e);
      Cursor inner(raw.data(), raw.size());
      while (!inner.done()) vars.push_back(parse_matrix(inner.next()));
    } else if (e.type == miMATRIX) {
      vars.push_back(parse_matrix(e));
    }
  }
  return vars;
}

std::optional<std::vector<double>> find_channel(const std::vector<Array>& variables,
                                                const std::string& channel) {
  std::function<const Array*(const Array&)> search = [&](const Array& a) -> const Array* {
    if (a.kind != ArrayKind::Struct && a.kind != ArrayKind::Cell) return nullptr;
    for (std::size_t i = 0; i < a.elements.size(); ++i) {
      if (a.kind == ArrayKind::Struct) {
        const Array* name = a.field("Name", i);
        const Array* data = a.field("Data", i);
        if (name && data && name->kind == ArrayKind::Char && name->text == channel) {
          if (data->kind == ArrayKind::Numeric) return data;
          spdlog::warn("channel '{}' is not numeric; skipped", channel);
        }
      }
      for (const auto& [key, child] : a.elements[i]) {
        if (const Array* hit = search(child)) return hit;
      }
    }
    return nullptr;
  };
  for (const auto& v : variables) {
    if (const Array* hit = search(v)) return hit->numeric;
  }
  return std::nullopt;
}

}  // namespace sdalr::mat
