#include "cni/tensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "cni/errors.hpp"

namespace cni {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'N', 'I', 'T'};
constexpr std::size_t kFixedHeader = 7;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& manifest_path, const std::string& p) {
  const std::filesystem::path rel(p);
  if (rel.is_absolute()) return rel;
  return manifest_path.parent_path() / rel;
}

json parse_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ReadError, "cannot open manifest " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::size_t positive_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_unsigned() || doc[key].get<std::size_t>() == 0)
    throw Error(ErrorCode::ParseError, std::string("manifest field '") + key + "' must be a positive integer");
  return doc[key].get<std::size_t>();
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  if (!doc.contains(key)) return {};
  try {
    return doc[key].get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, std::string("manifest field '") + key + "' must be a list of strings");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.ndim() > 255) throw Error(ErrorCode::WriteError, "ndim exceeds 255");
  if (element_count(t.shape) != t.data.size())
    throw Error(ErrorCode::ShapeMismatch, "tensor data does not match shape " + shape_string(t.shape));
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * t.ndim() + 4 * t.numel());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kTensorFormatVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (const auto d : t.shape) put_u64(out, d);
  for (const float f : t.data) put_f32(out, f);
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, ReadOptions opts) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadMagic, "missing CNIT magic");
  if (bytes.size() < kFixedHeader) throw Error(ErrorCode::LengthMismatch, "truncated header");
  if (bytes[4] != kTensorFormatVersion)
    throw Error(ErrorCode::BadVersion, "unsupported version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeF32) throw Error(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(bytes[5]));
  const std::size_t ndim = bytes[6];
  const std::size_t header = kFixedHeader + 8 * ndim;
  if (bytes.size() < header) throw Error(ErrorCode::LengthMismatch, "truncated shape");

  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u64(bytes.data() + kFixedHeader + 8 * i);

  std::size_t numel = 0;
  try {
    numel = element_count(shape);
  } catch (const Error&) {
    throw Error(ErrorCode::LengthMismatch, "shape " + shape_string(shape) + " is too large");
  }
  const std::size_t payload = bytes.size() - header;
  if (numel > payload / 4 || payload != 4 * numel)
    throw Error(ErrorCode::LengthMismatch, "shape " + shape_string(shape) + " needs " + std::to_string(numel) +
                                               " values but payload has " + std::to_string(payload) + " bytes");

  std::vector<float> data(numel);
  const auto* p = bytes.data() + header;
  for (std::size_t i = 0; i < numel; ++i) data[i] = get_f32(p + 4 * i);
  if (!opts.allow_nonfinite && !all_finite(data))
    throw Error(ErrorCode::NonFiniteValue, "tensor contains NaN or Inf");
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::WriteError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::WriteError, "short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path, ReadOptions opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ReadError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes, opts);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

Tensor labels_to_tensor(std::span<const int> labels) {
  std::vector<float> data;
  data.reserve(labels.size());
  for (const int l : labels) data.push_back(static_cast<float>(l));
  return Tensor({labels.size()}, std::move(data));
}

std::vector<int> tensor_to_labels(const Tensor& t) {
  if (t.ndim() != 1) throw Error(ErrorCode::ShapeMismatch, "labels must be 1-D, got " + shape_string(t.shape));
  std::vector<int> labels;
  labels.reserve(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const float v = t.data[i];
    // f32 is exact for integers up to 2^24
    if (v != std::floor(v) || v < 0.0f || v > 16777216.0f)
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(v) + " at " + std::to_string(i) +
                                                  " is not a non-negative integer");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void write_manifest(const std::filesystem::path& path, const ManifestDocument& doc) {
  json j;
  j["format"] = "cni-manifest";
  j["version"] = 1;
  j["classes"] = doc.classes;
  j["dim"] = doc.dim;
  j["tokens_per_example"] = doc.tokens_per_example;
  j["class_names"] = doc.class_names;
  json splits = json::object();
  for (const auto& [name, s] : doc.splits) splits[name] = {{"tokens", s.tokens}, {"labels", s.labels}};
  j["splits"] = splits;
  if (doc.bank_path) j["bank"] = {{"embeddings", *doc.bank_path}, {"prompt_templates", doc.prompt_templates}};
  if (!doc.generator_json.empty()) j["generator"] = json::parse(doc.generator_json);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::WriteError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::WriteError, "short write to " + path.string());
}

std::vector<std::string> manifest_splits(const std::filesystem::path& path) {
  const auto doc = parse_manifest_file(path);
  std::vector<std::string> names;
  if (doc.contains("splits") && doc["splits"].is_object())
    for (const auto& [name, _] : doc["splits"].items()) names.push_back(name);
  return names;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const std::string& split) {
  const auto doc = parse_manifest_file(path);
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "manifest must be a JSON object");

  DatasetManifest m;
  m.name = split;
  m.classes = positive_field(doc, "classes");
  m.dim = positive_field(doc, "dim");
  m.tokens_per_example = positive_field(doc, "tokens_per_example");
  m.class_names = string_list(doc, "class_names");
  if (!m.class_names.empty() && m.class_names.size() != m.classes)
    throw Error(ErrorCode::ParseError, "class_names has " + std::to_string(m.class_names.size()) +
                                           " entries, expected " + std::to_string(m.classes));

  if (!doc.contains("splits") || !doc["splits"].is_object() || !doc["splits"].contains(split))
    throw Error(ErrorCode::ParseError, "manifest has no split '" + split + "'");
  const auto& s = doc["splits"][split];
  if (!s.contains("tokens") || !s["tokens"].is_string() || !s.contains("labels") || !s["labels"].is_string())
    throw Error(ErrorCode::ParseError, "split '" + split + "' needs string fields 'tokens' and 'labels'");
  m.tokens_path = resolve(path, s["tokens"].get<std::string>());
  m.labels_path = resolve(path, s["labels"].get<std::string>());

  const auto ds = load_dataset(m);
  m.examples = ds.size();
  return m;
}

EmbeddingDataset load_dataset(const DatasetManifest& m) {
  EmbeddingDataset ds;
  ds.tokens = read_tensor(m.tokens_path);
  ds.labels = tensor_to_labels(read_tensor(m.labels_path));
  ds.classes = m.classes;
  const Shape want{ds.labels.size(), m.tokens_per_example, m.dim};
  if (ds.tokens.shape != want)
    throw Error(ErrorCode::ShapeMismatch, "tokens " + shape_string(ds.tokens.shape) + " disagree with manifest " +
                                              shape_string(want));
  ds.validate();
  return ds;
}

EmbeddingDataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split) {
  return load_dataset(load_manifest(manifest_path, split));
}

TextEmbeddingBank load_bank(const std::filesystem::path& manifest_path) {
  const auto doc = parse_manifest_file(manifest_path);
  if (!doc.contains("bank") || !doc["bank"].contains("embeddings") || !doc["bank"]["embeddings"].is_string())
    throw Error(ErrorCode::ConfigError, "manifest " + manifest_path.string() + " references no text bank");
  TextEmbeddingBank bank;
  bank.embeddings = read_tensor(resolve(manifest_path, doc["bank"]["embeddings"].get<std::string>()));
  bank.prompt_templates = string_list(doc["bank"], "prompt_templates");
  bank.class_names = string_list(doc, "class_names");
  bank.validate();
  if (doc.contains("classes") && doc["classes"].is_number_unsigned() &&
      doc["classes"].get<std::size_t>() != bank.classes())
    throw Error(ErrorCode::ShapeMismatch, "bank class count disagrees with manifest");
  return bank;
}

}  // namespace cni
