#pragma once

// Minimal reader for MATLAB level-5 MAT files: numeric, char, struct and cell
// arrays, including zlib-compressed elements. Little-endian files only.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sdalr::mat {

enum class ArrayKind { Numeric, Char, Struct, Cell, Unsupported };

struct Array {
  ArrayKind kind = ArrayKind::Unsupported;
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> numeric;  // real part, column-major
  std::string text;             // Char
  std::vector<std::string> field_names;
  // Struct: one field map per element. Cell: one entry per element under "".
  std::vector<std::map<std::string, Array>> elements;

  std::size_t element_count() const;
  const Array* field(const std::string& name, std::size_t element = 0) const;
};

/// Top-level variables in file order.
std::vector<Array> read_file(const std::filesystem::path& path);

/// Searches the variable tree for a struct element whose `Name` field equals
/// `channel` and returns its numeric `Data` field.
std::optional<std::vector<double>> find_channel(const std::vector<Array>& variables,
                                                const std::string& channel);

}  // namespace sdalr::mat
