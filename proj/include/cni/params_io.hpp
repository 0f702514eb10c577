#pragma once

#include <filesystem>

#include "cni/headinit.hpp"
#include "cni/model.hpp"

namespace cni {

// A parameter directory holds one CNIT file per group
// (adapter_weight, adapter_bias, pool_query, head_weight, head_bias) plus
// params.json with {classes, dim, logit_scale}. Values persist as f32.

void save_params(const std::filesystem::path& dir, const ModelParams& params);

/// head_weight.cnit is required. Missing adapter/pooler files default to the
/// identity adapter and zero query, a missing head_bias to zeros, and a missing
/// params.json to the default logit scale, so a directory written by
/// save_head can be evaluated directly.
ModelParams load_params(const std::filesystem::path& dir);

/// head_weight.cnit, head_bias.cnit and provenance.json.
void save_head(const std::filesystem::path& dir, const Head& head, const HeadInitSpec& spec);

}  // namespace cni
