#include "cni/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "cni/errors.hpp"

namespace cni {

std::size_t element_count(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (const auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
      throw Error(ErrorCode::ShapeMismatch, "element count overflows for shape " + shape_string(shape));
    n *= d;
  }
  if (n > std::numeric_limits<std::size_t>::max())
    throw Error(ErrorCode::ShapeMismatch, "element count does not fit in memory");
  return static_cast<std::size_t>(n);
}

std::string shape_string(std::span<const std::uint64_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape_in, std::vector<float> data_in) : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (element_count(shape) != data.size())
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " needs " +
                                              std::to_string(element_count(shape)) + " values, got " +
                                              std::to_string(data.size()));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape || a.data.size() != b.data.size()) return false;
  return a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

bool all_finite(std::span<const float> values) {
  for (const float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace cni
