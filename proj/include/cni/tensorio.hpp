#pragma once

// CNIT binary tensor format (all integers little-endian):
//
//   offset  size      field
//   0       4         magic "CNIT"
//   4       1         version, 0x01
//   5       1         dtype, 0x01 = f32
//   6       1         ndim
//   7       8*ndim    dims, u64 each
//   ...     4*numel   data, f32 row-major
//
// File size is exactly 7 + 8*ndim + 4*numel bytes; trailing bytes are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cni/embeddings.hpp"
#include "cni/tensor.hpp"

namespace cni {

inline constexpr std::uint8_t kTensorFormatVersion = 0x01;
inline constexpr std::uint8_t kDtypeF32 = 0x01;

struct ReadOptions {
  bool allow_nonfinite = false;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes, ReadOptions opts = {});

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path, ReadOptions opts = {});

/// Labels persist as a 1-D f32 tensor of integral values.
Tensor labels_to_tensor(std::span<const int> labels);
std::vector<int> tensor_to_labels(const Tensor& t);

/// One split of a manifest, with paths already resolved against the manifest directory.
struct DatasetManifest {
  std::string name;
  std::filesystem::path tokens_path;
  std::filesystem::path labels_path;
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::size_t tokens_per_example = 0;
  std::size_t examples = 0;
  std::vector<std::string> class_names;
};

/// Everything needed to write a manifest file. Paths are stored as given
/// (normally relative to the manifest's directory).
struct ManifestDocument {
  struct Split {
    std::string tokens;
    std::string labels;
  };
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::size_t tokens_per_example = 0;
  std::vector<std::string> class_names;
  std::map<std::string, Split> splits;
  std::optional<std::string> bank_path;
  std::vector<std::string> prompt_templates;
  std::string generator_json;  // optional serialized JSON object, stored verbatim under "generator"
};

void write_manifest(const std::filesystem::path& path, const ManifestDocument& doc);

std::vector<std::string> manifest_splits(const std::filesystem::path& path);

/// Parses the manifest and eagerly cross-checks the split's tensors against
/// (M, T, D) and the label range. Throws ParseError, ShapeMismatch or LabelOutOfRange.
DatasetManifest load_manifest(const std::filesystem::path& path, const std::string& split);

EmbeddingDataset load_dataset(const DatasetManifest& manifest);
EmbeddingDataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split);

/// Bank referenced by the manifest; ConfigError when the manifest has none.
TextEmbeddingBank load_bank(const std::filesystem::path& manifest_path);

}  // namespace cni
