// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eqdp {

enum class NpyDtype { kU8, kF32, kI64 };

std::string npy_descr(NpyDtype dtype);  // "|u1", "<f4", "<i8"
std::size_t npy_item_size(NpyDtype dtype);

struct NpyArray {
  NpyDtype dtype = NpyDtype::kU8;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> payload;  // C-order, little-endian

  std::size_t count() const;
  std::vector<std::int64_t> as_int64() const;  // integer dtypes only
  std::vector<float> as_float() const;
};

// Reads NPY v1/v2 files with C-order '|u1', '<f4' or '<i8' payloads.
NpyArray read_npy(const std::filesystem::path& path);
NpyArray parse_npy(const std::vector<std::uint8_t>& bytes, const std::string& origin = "buffer");

// Writes a v1.0 file via a temporary file and rename.
void write_npy(const std::filesystem::path& path, const NpyArray& array);
std::vector<std::uint8_t> serialize_npy(const NpyArray& array);

}  // namespace eqdp
