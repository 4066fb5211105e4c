#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "medfocus/numerics/tensor.hpp"

namespace medfocus {

using TensorMap = std::map<std::string, Tensor>;

// MFC1 named-tensor archive:
//   bytes 0..3   "MFC1"
//   bytes 4..11  u64 little-endian length L of the index
//   next L bytes UTF-8 JSON object: name -> {"shape": [...], "byte_offset": o, "byte_len": n}
//   remainder    concatenated little-endian IEEE-754 f64 payloads
// byte_offset counts from the first payload byte. Tensors are laid out in
// lexicographic name order and the index is written with sorted keys, so
// equal maps always encode to equal bytes.

std::vector<std::uint8_t> encode_archive(const TensorMap& tensors);
TensorMap decode_archive(const std::vector<std::uint8_t>& bytes);

void write_archive(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_archive(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace medfocus
