#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cni/errors.hpp"

namespace cni::cli {

using json = nlohmann::json;

// Resolved settings of one subcommand. Precedence: defaults < JSON config < flags.
// Keys use underscores; the matching flag is the key with dashes.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with option values");
  }

  template <class T>
  void add(const std::string& key, json def, const std::string& help) {
    values_[key] = std::move(def);
    auto store = std::make_shared<T>();
    CLI::Option* opt = app_->add_option("--" + dashed(key), *store, help);
    if constexpr (std::is_same_v<T, std::vector<std::string>>) opt->delimiter(',');
    overrides_.push_back([this, key, store, opt] {
      if (opt->count() > 0) values_[key] = *store;
    });
  }

  void flag(const std::string& key, const std::string& help) {
    values_[key] = false;
    auto store = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag("--" + dashed(key), *store, help);
    overrides_.push_back([this, key, store, opt] {
      if (opt->count() > 0) values_[key] = *store;
    });
  }

  /// Renames keys of extra JSON files loaded with merge_file (e.g. "mode" -> "init").
  void alias(const std::string& from, const std::string& to) { aliases_.emplace_back(from, to); }

  void merge_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, "config file not found: " + path.string());
    std::ifstream in(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, "cannot parse " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, path.string() + " must hold a JSON object");
    for (auto& [k, v] : j.items()) {
      std::string key = k;
      for (const auto& [from, to] : aliases_)
        if (key == from) key = to;
      if (!values_.contains(key)) throw Error(ErrorCode::ConfigError, "unknown option '" + k + "' in " + path.string());
      values_[key] = v;
    }
  }

  void resolve() {
    if (!config_path_.empty()) merge_file(config_path_);
    for (auto& f : overrides_) f();
  }

  const json& values() const { return values_; }

  bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key) const {
    if (!has(key)) throw Error(ErrorCode::ConfigError, "missing required option --" + dashed(key));
    try {
      return values_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::ConfigError, "option --" + dashed(key) + " has the wrong type: " + values_.at(key).dump());
    }
  }

  /// Non-negative integer option.
  std::uint64_t count(const std::string& key) const {
    if (!has(key)) throw Error(ErrorCode::ConfigError, "missing required option --" + dashed(key));
    const json& v = values_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw Error(ErrorCode::ConfigError, "option --" + dashed(key) + " must be a non-negative integer, got " + v.dump());
    return v.get<std::uint64_t>();
  }

  template <class T>
  std::optional<T> maybe(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  static std::string dashed(std::string key) {
    for (char& c : key)
      if (c == '_') c = '-';
    return key;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  json values_ = json::object();
  std::vector<std::function<void()>> overrides_;
  std::vector<std::pair<std::string, std::string>> aliases_;
};

}  // namespace cni::cli
