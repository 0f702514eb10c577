#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cni {

using Shape = std::vector<std::uint64_t>;

/// Product of the shape entries; throws ShapeMismatch on 64-bit overflow.
std::size_t element_count(std::span<const std::uint64_t> shape);

std::string shape_string(std::span<const std::uint64_t> shape);

/// Dense row-major f32 array. The persisted value type for every embedding,
/// label and parameter file.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  /// Throws ShapeMismatch unless data.size() == product(shape).
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);

  std::size_t ndim() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return static_cast<std::size_t>(shape.at(axis)); }
};

/// Byte-for-byte equality of shape and payload (distinguishes -0.0 from 0.0, compares NaN payloads).
bool bit_equal(const Tensor& a, const Tensor& b);

bool all_finite(std::span<const float> values);

}  // namespace cni
