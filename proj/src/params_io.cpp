#include "cni/params_io.hpp"

#include <fstream>

#include <json.hpp>

#include "cni/errors.hpp"
#include "cni/tensorio.hpp"

namespace cni {

namespace {

std::filesystem::path group_file(const std::filesystem::path& dir, ParamGroup g) {
  return dir / (std::string(to_string(g)) + ".cnit");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::WriteError, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::WriteError, "short write to " + path.string());
}

}  // namespace

void save_params(const std::filesystem::path& dir, const ModelParams& params) {
  params.validate();
  std::filesystem::create_directories(dir);
  for (const auto g : kAllParamGroups) {
    const auto shape = params.shape(g);
    const auto values = params.group(g);
    Shape s = shape.cols == 1 ? Shape{shape.rows} : Shape{shape.rows, shape.cols};
    write_tensor(group_file(dir, g), Tensor(s, std::vector<float>(values.begin(), values.end())));
  }
  write_json(dir / "params.json",
             {{"classes", params.classes}, {"dim", params.dim}, {"logit_scale", params.logit_scale}});
}

ModelParams load_params(const std::filesystem::path& dir) {
  const auto head_path = group_file(dir, ParamGroup::HeadWeight);
  if (!std::filesystem::exists(head_path))
    throw Error(ErrorCode::ConfigError, "no " + head_path.filename().string() + " in " + dir.string());
  const auto w = read_tensor(head_path);
  if (w.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "head_weight must be 2-D");

  Head head;
  head.weight = w;
  head.bias = Tensor::zeros({w.dim(0)});
  const auto bias_path = group_file(dir, ParamGroup::HeadBias);
  if (std::filesystem::exists(bias_path)) head.bias = read_tensor(bias_path);

  double scale = kDefaultLogitScale;
  if (std::filesystem::exists(dir / "params.json")) {
    std::ifstream in(dir / "params.json");
    try {
      const auto j = nlohmann::json::parse(in);
      scale = j.value("logit_scale", kDefaultLogitScale);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, (dir / "params.json").string() + ": " + e.what());
    }
  }
  auto params = ModelParams::from_head(head, scale);

  for (const auto g : {ParamGroup::AdapterWeight, ParamGroup::AdapterBias, ParamGroup::PoolQuery}) {
    const auto path = group_file(dir, g);
    if (!std::filesystem::exists(path)) continue;
    const auto t = read_tensor(path);
    auto dst = params.group(g);
    if (t.numel() != dst.size())
      throw Error(ErrorCode::ShapeMismatch, path.string() + " has " + std::to_string(t.numel()) + " values, expected " +
                                                std::to_string(dst.size()));
    std::copy(t.data.begin(), t.data.end(), dst.begin());
  }
  return params;
}

void save_head(const std::filesystem::path& dir, const Head& head, const HeadInitSpec& spec) {
  std::filesystem::create_directories(dir);
  write_tensor(group_file(dir, ParamGroup::HeadWeight), head.weight);
  write_tensor(group_file(dir, ParamGroup::HeadBias), head.bias);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto src : head.provenance) rows.push_back(src == RowSource::Text ? "text" : "random");
  nlohmann::json j{{"mode", to_string(spec.mode)},
                   {"seed", spec.seed},
                   {"classes", head.weight.dim(0)},
                   {"dim", head.weight.dim(1)},
                   {"text_rows", head.text_rows()},
                   {"random_rows", head.provenance.size() - head.text_rows()},
                   {"rows", rows}};
  if (spec.fraction) j["fraction"] = *spec.fraction;
  write_json(dir / "provenance.json", j);
}

}  // namespace cni
