#pragma once

// `.ten` files: one line of UTF-8 JSON {"dtype":"f32","shape":[...],
// "byte_order":"little"} terminated by '\n', then the raw little-endian
// float32 payload in row-major order.

#include <filesystem>
#include <string>
#include <vector>

#include "animpref/tensor.hpp"

namespace animpref {

struct TenData {
  std::vector<int> shape;
  std::vector<double> values;
};

void write_ten(const std::filesystem::path& path, const std::vector<int>& shape, const std::vector<double>& values);
TenData read_ten(const std::filesystem::path& path);

void write_ten(const std::filesystem::path& path, const Array4& a);
Array4 read_ten4(const std::filesystem::path& path);

void write_ten(const std::filesystem::path& path, const Mat& m);
Mat read_ten_mat(const std::filesystem::path& path);

/// Serialized bytes, for byte-identity checks without touching disk.
std::string encode_ten(const std::vector<int>& shape, const std::vector<double>& values);
TenData decode_ten(const std::string& bytes);

}  // namespace animpref
