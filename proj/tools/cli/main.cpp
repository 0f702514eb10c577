#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cni/benchmark.hpp"
#include "cni/dataset.hpp"
#include "cni/distill.hpp"
#include "cni/errors.hpp"
#include "cni/eval.hpp"
#include "cni/headinit.hpp"
#include "cni/params_io.hpp"
#include "cni/tensorio.hpp"
#include "cni/train.hpp"
#include "options.hpp"

namespace fs = std::filesystem;
using cni::cli::json;
using cni::cli::Options;

namespace {

std::string iso8601_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw cni::Error(cni::ErrorCode::WriteError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw cni::Error(cni::ErrorCode::WriteError, "short write to " + path.string());
}

fs::path prepare_out(const Options& o) {
  const fs::path out = o.get<std::string>("out");
  fs::create_directories(out);
  return out;
}

void echo_config(const fs::path& out, const std::string& command, const Options& o) {
  json j;
  j["command"] = command;
  j["created_at"] = iso8601_now();
  j["config"] = o.values();
  write_text(out / "config.json", j.dump(2) + "\n");
}

fs::path existing(const Options& o, const std::string& key) {
  const fs::path p = o.get<std::string>(key);
  if (!fs::exists(p)) throw cni::Error(cni::ErrorCode::ConfigError, "--" + Options::dashed(key) + " path not found: " + p.string());
  return p;
}

std::vector<std::string> string_list(const Options& o, const std::string& key) {
  std::vector<std::string> out;
  const json& v = o.values().at(key);
  if (!v.is_array()) throw cni::Error(cni::ErrorCode::ConfigError, "option --" + Options::dashed(key) + " must be a list");
  for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
  return out;
}

std::vector<std::uint64_t> count_list(const Options& o, const std::string& key) {
  std::vector<std::uint64_t> out;
  for (const auto& s : string_list(o, key)) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw cni::Error(cni::ErrorCode::ConfigError, "option --" + Options::dashed(key) + " expects non-negative integers, got '" + s + "'");
    out.push_back(std::stoull(s));
  }
  return out;
}

// ---- shared training options ----

void add_train_options(Options& o, bool with_policy) {
  o.add<std::string>("manifest", nullptr, "dataset manifest");
  o.add<std::string>("train_split", "train", "labeled split");
  o.add<std::string>("test_split", "test", "evaluation split");
  o.add<std::string>("preset", "default", "default | benchmark: fills unset lr, label smoothing and distill weight");
  o.add<double>("fraction", nullptr, "text-initialized row fraction for --init partial");
  o.add<std::uint64_t>("init_seed", nullptr, "head init seed (defaults to --seed)");
  o.add<double>("data_fraction", nullptr, "train on this fraction of every class instead of k shots");
  if (with_policy) o.add<std::string>("policy", "PL", "L | PL | ALL");
  o.add<std::uint64_t>("epochs", 200, "training epochs");
  o.add<std::uint64_t>("batch_size", 32, "labeled batch size");
  o.add<std::uint64_t>("eval_every", 10, "record metrics every N epochs");
  o.add<double>("lr", nullptr, "base learning rate (preset default depends on --init)");
  o.add<double>("min_lr", 0.0, "final learning rate of the cosine schedule");
  o.add<std::uint64_t>("warmup_steps", 0, "linear warmup steps");
  o.add<double>("label_smoothing", nullptr, "label smoothing epsilon");
  o.add<double>("anchor_lambda", 0.0, "anchored L2 weight");
  o.add<double>("logit_scale", cni::kDefaultLogitScale, "fixed cosine logit scale");
  o.add<double>("beta1", 0.9, "Adafactor momentum");
  o.add<double>("beta2", 0.999, "Adafactor second-moment decay cap");
  o.add<double>("weight_decay", 0.01, "decoupled weight decay");
  o.add<double>("clip_threshold", 1.0, "Adafactor update RMS clip");
  o.add<std::uint64_t>("seed", 0, "shot sampling and batch order seed");
  o.add<std::string>("out", nullptr, "output directory");
}

bool benchmark_preset(const Options& o) {
  const auto p = o.get<std::string>("preset");
  if (p == "default") return false;
  if (p == "benchmark") return true;
  throw cni::Error(cni::ErrorCode::ConfigError, "unknown preset '" + p + "' (default | benchmark)");
}

cni::HeadInitSpec head_spec(const Options& o, cni::HeadInitMode mode, std::uint64_t seed) {
  cni::HeadInitSpec spec;
  spec.mode = mode;
  spec.seed = o.has("init_seed") ? o.count("init_seed") : seed;
  if (mode == cni::HeadInitMode::Partial) {
    if (!o.has("fraction")) throw cni::Error(cni::ErrorCode::ConfigError, "--init partial needs --fraction");
    spec.fraction = o.get<double>("fraction");
  }
  return spec;
}

cni::TrainConfig train_config(const Options& o, cni::HeadInitMode mode, std::uint64_t seed,
                              std::optional<std::uint64_t> shots, cni::FreezePolicy policy) {
  const bool bench = benchmark_preset(o);
  const cni::benchmark::Recipe recipe;
  cni::TrainConfig cfg;
  if (o.has("data_fraction")) {
    if (shots) throw cni::Error(cni::ErrorCode::ConfigError, "--shots and --data-fraction are exclusive");
    cfg.shots = cni::ShotSpec::portion(o.get<double>("data_fraction"), seed);
  } else {
    cfg.shots = cni::ShotSpec::shots(shots.value_or(1), seed);
  }
  cfg.epochs = o.count("epochs");
  cfg.batch_size = o.count("batch_size");
  cfg.eval_every = o.count("eval_every");
  double default_lr = mode == cni::HeadInitMode::CategoryNames ? cni::kDefaultLrCategoryNames : cni::kDefaultLrRandom;
  if (bench) default_lr = recipe.lr_for(mode);
  cfg.schedule.base_lr = o.get_or<double>("lr", default_lr);
  cfg.schedule.min_lr = o.get<double>("min_lr");
  cfg.schedule.warmup_steps = o.count("warmup_steps");
  cfg.loss.label_smoothing = o.get_or<double>("label_smoothing", bench ? recipe.label_smoothing : cni::LossConfig{}.label_smoothing);
  cfg.loss.anchor_lambda = o.get<double>("anchor_lambda");
  cfg.policy = policy;
  cfg.optimizer.beta1 = o.get<double>("beta1");
  cfg.optimizer.beta2 = o.get<double>("beta2");
  cfg.optimizer.weight_decay = o.get<double>("weight_decay");
  cfg.optimizer.clip_threshold = o.get<double>("clip_threshold");
  cfg.seed = seed;
  return cfg;
}

cni::HeadInitMode parse_mode(const std::string& s) {
  try {
    return cni::parse_head_init_mode(s);
  } catch (const cni::Error& e) {
    throw cni::Error(cni::ErrorCode::ConfigError, e.message());
  }
}

cni::FreezePolicy parse_policy(const std::string& s) {
  try {
    return cni::parse_freeze_policy(s);
  } catch (const cni::Error& e) {
    throw cni::Error(cni::ErrorCode::ConfigError, e.message());
  }
}

void validate_config(const cni::TrainConfig& cfg) {
  try {
    cfg.validate();
  } catch (const cni::Error& e) {
    if (cni::family(e.code()) != cni::ErrorFamily::Config) throw cni::Error(cni::ErrorCode::ConfigError, e.message());
    throw;
  }
}

cni::ModelParams initial_params(const cni::Head& head, double logit_scale) {
  auto p = cni::ModelParams::from_head(head);
  p.logit_scale = logit_scale;
  return p;
}

void write_history(const fs::path& out, const cni::TrainResult& r) {
  write_text(out / "metrics.csv", r.history.to_csv());
  write_text(out / "metrics.json", r.history.to_json() + "\n");
  cni::save_params(out / "params", r.params);
}

// ---- subcommands ----

int cmd_synth(const Options& o) {
  cni::SyntheticSpec spec;
  spec.classes = o.count("classes");
  spec.dim = o.count("dim");
  spec.tokens = o.count("tokens");
  spec.train_per_class = o.count("train_per_class");
  spec.test_per_class = o.count("test_per_class");
  spec.prompts = o.count("prompts");
  spec.img_noise = o.get<double>("img_noise");
  spec.txt_noise = o.get<double>("txt_noise");
  spec.seed = o.count("seed");
  spec.validate();
  const auto out = prepare_out(o);
  const auto manifest = cni::save_synthetic(out, cni::make_synthetic(spec), spec);
  echo_config(out, "synth", o);
  std::cout << "manifest=" << manifest.string() << "\n";
  return 0;
}

int cmd_init_head(const Options& o) {
  cni::TextEmbeddingBank bank;
  if (o.has("bank")) {
    bank.embeddings = cni::read_tensor(existing(o, "bank"));
  } else if (o.has("manifest")) {
    bank = cni::load_bank(existing(o, "manifest"));
  } else {
    throw cni::Error(cni::ErrorCode::ConfigError, "init-head needs --bank or --manifest");
  }
  bank.validate();
  const auto mode = parse_mode(o.get<std::string>("init"));
  cni::HeadInitSpec spec;
  spec.mode = mode;
  spec.seed = o.count("seed");
  if (mode == cni::HeadInitMode::Partial) spec.fraction = o.get<double>("fraction");
  const auto text = cni::average_text_embeddings(bank);
  const auto head = cni::init_head(spec, &text, bank.classes(), bank.dim());
  const auto out = prepare_out(o);
  cni::save_head(out, head, spec);
  echo_config(out, "init-head", o);
  std::cout << "text_rows=" << head.text_rows() << "\n";
  return 0;
}

int cmd_sample_shots(const Options& o) {
  const auto ds = cni::load_dataset(existing(o, "manifest"), o.get<std::string>("split"));
  cni::ShotSpec spec;
  spec.seed = o.count("seed");
  if (o.has("k")) spec.k = o.count("k");
  if (o.has("fraction")) spec.fraction = o.get<double>("fraction");
  if (!spec.k && !spec.fraction) spec.k = 1;
  try {
    spec.validate();
  } catch (const cni::Error& e) {
    throw cni::Error(cni::ErrorCode::ConfigError, e.message());
  }
  const auto indices = cni::sample_k_shot(ds, spec);
  json j;
  j["split"] = o.get<std::string>("split");
  j["seed"] = spec.seed;
  if (spec.k) j["k"] = *spec.k;
  if (spec.fraction) j["fraction"] = *spec.fraction;
  j["indices"] = indices;
  std::vector<int> labels;
  for (auto i : indices) labels.push_back(ds.labels[i]);
  j["labels"] = labels;
  const auto out = prepare_out(o);
  write_text(out / "shots.json", j.dump(2) + "\n");
  echo_config(out, "sample-shots", o);
  std::cout << "selected=" << indices.size() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto manifest = existing(o, "manifest");
  const auto mode = parse_mode(o.get<std::string>("init"));
  const std::uint64_t seed = o.count("seed");
  const auto cfg = train_config(o, mode, seed, o.has("shots") ? std::optional(o.count("shots")) : std::nullopt,
                                parse_policy(o.get<std::string>("policy")));
  validate_config(cfg);
  const auto spec = head_spec(o, mode, seed);

  const auto train_ds = cni::load_dataset(manifest, o.get<std::string>("train_split"));
  const auto test_ds = cni::load_dataset(manifest, o.get<std::string>("test_split"));
  const auto bank = cni::load_bank(manifest);
  const auto text = cni::average_text_embeddings(bank);
  const auto head = cni::init_head(spec, &text, bank.classes(), bank.dim());

  const auto result = cni::train(initial_params(head, o.get<double>("logit_scale")), train_ds, test_ds, cfg);
  const auto out = prepare_out(o);
  cni::save_head(out / "init", head, spec);
  write_history(out, result);
  echo_config(out, "train", o);
  std::printf("final_top1=%.6f\n", result.final_top1());
  return 0;
}

int cmd_distill(const Options& o) {
  const auto manifest = existing(o, "manifest");
  const auto teacher = cni::load_params(existing(o, "teacher"));
  const auto mode = parse_mode(o.get<std::string>("init"));
  const std::uint64_t seed = o.count("seed");
  cni::DistillConfig dcfg;
  dcfg.student = train_config(o, mode, seed, o.has("shots") ? std::optional(o.count("shots")) : std::nullopt,
                              cni::FreezePolicy::All);
  const cni::benchmark::Recipe recipe;
  dcfg.student.loss.distill_weight = o.get_or<double>("distill_weight", benchmark_preset(o) ? recipe.distill_weight : 1.0);
  dcfg.student.loss.distill_temperature = o.get<double>("distill_temperature");
  dcfg.unlabeled_batch_size = o.count("unlabeled_batch_size");
  validate_config(dcfg.student);
  const auto spec = head_spec(o, mode, seed);

  const auto labeled = cni::load_dataset(manifest, o.get<std::string>("train_split"));
  const auto pool = cni::load_dataset(manifest, o.get<std::string>("unlabeled_split"));
  const auto test_ds = cni::load_dataset(manifest, o.get<std::string>("test_split"));
  const auto bank = cni::load_bank(manifest);
  const auto text = cni::average_text_embeddings(bank);
  const auto head = cni::init_head(spec, &text, bank.classes(), bank.dim());
  if (teacher.classes != head.weight.dim(0) || teacher.dim != head.weight.dim(1))
    throw cni::Error(cni::ErrorCode::ShapeMismatch, "teacher shape does not match the dataset");

  const auto result =
      cni::distill_train(teacher, initial_params(head, o.get<double>("logit_scale")), labeled, pool, test_ds, dcfg);
  const auto out = prepare_out(o);
  cni::save_head(out / "init", head, spec);
  write_history(out, result);
  echo_config(out, "distill", o);
  std::printf("final_top1=%.6f\n", result.final_top1());
  return 0;
}

int cmd_eval(const Options& o) {
  const auto manifest = existing(o, "manifest");
  const auto ds = cni::load_dataset(manifest, o.get<std::string>("split"));
  const bool zero = o.get<bool>("zero_shot");
  if (zero == o.has("params")) throw cni::Error(cni::ErrorCode::ConfigError, "eval needs exactly one of --zero-shot, --params");
  const auto report = zero ? cni::zero_shot(cni::load_bank(manifest), ds) : cni::top1(cni::load_params(existing(o, "params")), ds);
  auto j = json::parse(cni::to_json(report));
  j["created_at"] = iso8601_now();
  const auto out = prepare_out(o);
  write_text(out / "eval.json", j.dump(2) + "\n");
  echo_config(out, "eval", o);
  std::printf("top1=%.6f\n", report.top1);
  return 0;
}

std::size_t sweep_threads(const Options& o) {
  std::size_t n = o.has("threads") ? o.count("threads") : std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("CNI_PROBE_THREADS"); cap && *cap) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(cap, &end, 10);
    if (*end != '\0' || v == 0) throw cni::Error(cni::ErrorCode::ConfigError, std::string("CNI_PROBE_THREADS must be a positive integer, got '") + cap + "'");
    n = std::min<std::size_t>(n, v);
  }
  return std::max<std::size_t>(n, 1);
}

int cmd_sweep(const Options& o) {
  const auto manifest = existing(o, "manifest");
  const auto inits = string_list(o, "inits");
  const auto shots = count_list(o, "shots");
  const auto seeds = count_list(o, "seeds");
  const auto policies = string_list(o, "policies");
  if (inits.empty() || shots.empty() || seeds.empty() || policies.empty())
    throw cni::Error(cni::ErrorCode::ConfigError, "sweep lists must not be empty");

  std::vector<cni::SweepVariant> variants;
  for (const auto& init : inits)
    for (const auto k : shots)
      for (const auto& pol : policies)
        for (const auto seed : seeds) {
          const auto mode = parse_mode(init);
          cni::SweepVariant v;
          v.config = train_config(o, mode, seed, k, parse_policy(pol));
          validate_config(v.config);
          v.init = head_spec(o, mode, seed);
          v.logit_scale = o.get<double>("logit_scale");
          v.name = std::string(cni::to_string(mode)) + "-k" + std::to_string(k) + "-" + cni::to_string(v.config.policy) +
                   "-s" + std::to_string(seed);
          variants.push_back(std::move(v));
        }

  const auto train_ds = cni::load_dataset(manifest, o.get<std::string>("train_split"));
  const auto test_ds = cni::load_dataset(manifest, o.get<std::string>("test_split"));
  const auto bank = cni::load_bank(manifest);
  const auto rows = cni::sweep(variants, train_ds, test_ds, &bank, sweep_threads(o));
  const auto out = prepare_out(o);
  write_text(out / "sweep.csv", cni::sweep_to_csv(variants, rows));
  echo_config(out, "sweep", o);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  std::printf("runs=%zu failed=%zu\n", rows.size(), failed);
  return 0;
}

int exit_code(const cni::Error& e) { return static_cast<int>(cni::family(e.code())); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot classification heads initialized from category-name embeddings"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic embedding dataset");
  Options synth_o(synth);
  synth_o.add<std::uint64_t>("classes", 10, "classes C (>= 2)");
  synth_o.add<std::uint64_t>("dim", 32, "embedding dimension D");
  synth_o.add<std::uint64_t>("tokens", 4, "tokens per example T");
  synth_o.add<std::uint64_t>("train_per_class", 50, "training examples per class");
  synth_o.add<std::uint64_t>("test_per_class", 50, "test examples per class");
  synth_o.add<std::uint64_t>("prompts", 8, "prompt templates N");
  synth_o.add<double>("img_noise", 0.35, "image token noise");
  synth_o.add<double>("txt_noise", 0.15, "text embedding noise");
  synth_o.add<std::uint64_t>("seed", 0, "generator seed");
  synth_o.add<std::string>("out", nullptr, "output directory");

  auto* init_head = app.add_subcommand("init-head", "initialize a classification head from a text bank");
  Options head_o(init_head);
  head_o.add<std::string>("bank", nullptr, "CNIT bank tensor (N, C, D)");
  head_o.add<std::string>("manifest", nullptr, "manifest whose bank to use");
  head_o.add<std::string>("init", "cni", "cni | random | partial");
  head_o.add<double>("fraction", nullptr, "text-initialized row fraction for partial");
  head_o.add<std::uint64_t>("seed", 0, "seed for random rows");
  head_o.add<std::string>("out", nullptr, "output directory");
  head_o.alias("mode", "init");
  std::string head_spec_path;
  init_head->add_option("--spec", head_spec_path, "head init spec JSON {mode, fraction, seed}");

  auto* shots = app.add_subcommand("sample-shots", "draw a class-stratified k-shot subset");
  Options shots_o(shots);
  shots_o.add<std::string>("manifest", nullptr, "dataset manifest");
  shots_o.add<std::string>("split", "train", "split to sample from");
  shots_o.add<std::uint64_t>("k", nullptr, "examples per class");
  shots_o.add<double>("fraction", nullptr, "fraction of every class instead of k");
  shots_o.add<std::uint64_t>("seed", 0, "sampling seed");
  shots_o.add<std::string>("out", nullptr, "output directory");

  auto* train = app.add_subcommand("train", "initialize a head and fine-tune");
  Options train_o(train);
  add_train_options(train_o, true);
  train_o.add<std::string>("init", "cni", "cni | random | partial");
  train_o.add<std::uint64_t>("shots", nullptr, "labeled examples per class (default 1)");

  auto* distill = app.add_subcommand("distill", "fine-tune a student against a frozen teacher");
  Options distill_o(distill);
  add_train_options(distill_o, false);
  distill_o.add<std::string>("init", "cni", "student head init");
  distill_o.add<std::uint64_t>("shots", nullptr, "labeled examples per class (default 1)");
  distill_o.add<std::string>("teacher", nullptr, "teacher parameter directory");
  distill_o.add<std::string>("unlabeled_split", "train", "unlabeled pool split (labels ignored)");
  distill_o.add<std::uint64_t>("unlabeled_batch_size", 0, "unlabeled examples per step (0 = batch size)");
  distill_o.add<double>("distill_weight", nullptr, "KL term weight");
  distill_o.add<double>("distill_temperature", 1.0, "softmax temperature for teacher and student");

  auto* eval = app.add_subcommand("eval", "top-1 accuracy of saved parameters or the zero-shot classifier");
  Options eval_o(eval);
  eval_o.add<std::string>("manifest", nullptr, "dataset manifest");
  eval_o.add<std::string>("split", "test", "split to evaluate");
  eval_o.flag("zero_shot", "cosine classifier from the manifest's text bank");
  eval_o.add<std::string>("params", nullptr, "parameter directory");
  eval_o.add<std::string>("out", nullptr, "output directory");

  auto* sweep = app.add_subcommand("sweep", "train every combination of inits, shots, policies and seeds");
  Options sweep_o(sweep);
  add_train_options(sweep_o, false);
  sweep_o.add<std::vector<std::string>>("inits", json::array({"cni", "random"}), "comma-separated init modes");
  sweep_o.add<std::vector<std::string>>("shots", json::array({1}), "comma-separated shot counts");
  sweep_o.add<std::vector<std::string>>("seeds", json::array({0}), "comma-separated seeds");
  sweep_o.add<std::vector<std::string>>("policies", json::array({"PL"}), "comma-separated freezing policies");
  sweep_o.add<std::uint64_t>("threads", nullptr, "worker threads (capped by CNI_PROBE_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return synth_o.resolve(), cmd_synth(synth_o);
    if (*init_head) {
      if (!head_spec_path.empty()) head_o.merge_file(head_spec_path);
      head_o.resolve();
      return cmd_init_head(head_o);
    }
    if (*shots) return shots_o.resolve(), cmd_sample_shots(shots_o);
    if (*train) return train_o.resolve(), cmd_train(train_o);
    if (*distill) return distill_o.resolve(), cmd_distill(distill_o);
    if (*eval) return eval_o.resolve(), cmd_eval(eval_o);
    if (*sweep) return sweep_o.resolve(), cmd_sweep(sweep_o);
  } catch (const cni::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
