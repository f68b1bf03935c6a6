#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mobe/analyzer.hpp"
#include "mobe/baselines.hpp"
#include "mobe/checkpoint.hpp"
#include "mobe/errors.hpp"
#include "mobe/factorizer.hpp"
#include "mobe/normalizer.hpp"
#include "mobe/runtime.hpp"
#include "mobe/synthetic.hpp"
#include "mobe/version.hpp"

namespace mobe::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Files created by a command; removed again unless the command commits.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

  const fs::path& add(fs::path path) { return paths_.emplace_back(std::move(path)); }
  void commit() { committed_ = true; }
  const std::vector<fs::path>& paths() const { return paths_; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string() + " for writing");
  body(out);
  out.flush();
  if (!out) throw IoError(IoError::Kind::kWrite, "write to " + path.string() + " failed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ArgumentError(path.string() + ": invalid JSON: " + e.what());
  }
}

fs::path sibling(const fs::path& path, const std::string& suffix) { return fs::path(path.string() + suffix); }

template <typename T>
T field(const json& object, const char* key, T fallback) {
  const auto it = object.find(key);
  if (it == object.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ArgumentError(std::string("config field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& object, std::initializer_list<const char*> known, const std::string& what) {
  if (!object.is_object()) throw ArgumentError(what + " must be a JSON object");
  for (const auto& [key, _] : object.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ArgumentError(what + ": unknown field '" + key + "'");
    }
  }
}

MoEConfig moe_config_from(const json& j) {
  reject_unknown(j, {"layers", "experts", "hidden", "intermediate", "top_k", "activated_override"}, "model config");
  MoEConfig c;
  c.layers = field<std::uint32_t>(j, "layers", c.layers);
  c.experts = field<std::uint32_t>(j, "experts", c.experts);
  c.hidden = field<std::uint32_t>(j, "hidden", c.hidden);
  c.intermediate = field<std::uint32_t>(j, "intermediate", c.intermediate);
  c.top_k = field<std::uint32_t>(j, "top_k", c.top_k);
  if (j.contains("activated_override")) c.activated_override = field<std::uint32_t>(j, "activated_override", 0);
  return c;
}

json to_json(const MoEConfig& c) {
  json j{{"layers", c.layers}, {"experts", c.experts}, {"hidden", c.hidden}, {"intermediate", c.intermediate},
         {"top_k", c.top_k}};
  if (c.activated_override) j["activated_override"] = *c.activated_override;
  return j;
}

FactorizeConfig factorize_config_from(const json& j) {
  reject_unknown(j,
                 {"basis_count", "rank", "activation", "adam", "schedule", "steps", "seed", "groups", "normalize",
                  "mean_mode", "keep_mu", "early_stop", "init_jitter"},
                 "factorize config");
  FactorizeConfig c;
  c.basis_count = field<std::uint32_t>(j, "basis_count", c.basis_count);
  c.rank = field<std::uint32_t>(j, "rank", c.rank);
  c.activation = parse_activation(field<std::string>(j, "activation", std::string(to_string(c.activation))));
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    reject_unknown(a, {"lr", "beta1", "beta2", "eps"}, "adam config");
    c.adam.lr = field<double>(a, "lr", c.adam.lr);
    c.adam.beta1 = field<double>(a, "beta1", c.adam.beta1);
    c.adam.beta2 = field<double>(a, "beta2", c.adam.beta2);
    c.adam.eps = field<double>(a, "eps", c.adam.eps);
  }
  c.schedule = parse_lr_schedule(field<std::string>(j, "schedule", std::string(to_string(c.schedule))));
  c.steps = field<std::size_t>(j, "steps", c.steps);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  c.groups = field<std::uint32_t>(j, "groups", c.groups);
  c.normalize = field<bool>(j, "normalize", c.normalize);
  const auto mean_mode = field<std::string>(j, "mean_mode", "scalar");
  if (mean_mode != "scalar" && mean_mode != "matrix") throw ArgumentError("mean_mode must be scalar or matrix");
  c.mean_mode = mean_mode == "matrix" ? MeanMode::kMatrix : MeanMode::kScalar;
  c.keep_mu = field<bool>(j, "keep_mu", c.keep_mu);
  c.early_stop = field<bool>(j, "early_stop", c.early_stop);
  c.init_jitter = field<double>(j, "init_jitter", c.init_jitter);
  return c;
}

json to_json(const FactorizeConfig& c) {
  return json{{"basis_count", c.basis_count},
              {"rank", c.rank},
              {"activation", to_string(c.activation)},
              {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
              {"schedule", to_string(c.schedule)},
              {"steps", c.steps},
              {"seed", c.seed},
              {"groups", c.groups},
              {"normalize", c.normalize},
              {"mean_mode", c.mean_mode == MeanMode::kMatrix ? "matrix" : "scalar"},
              {"keep_mu", c.keep_mu},
              {"early_stop", c.early_stop},
              {"init_jitter", c.init_jitter}};
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path, const Outputs& outputs) const {
    json j{{"command", command},
           {"argv", argv},
           {"config", config},
           {"seeds", seeds},
           {"inputs", inputs},
           {"outputs", json::array()},
           {"version", kVersion},
           {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    for (const auto& p : outputs.paths()) {
      if (p != path) j["outputs"].push_back(p.string());
    }
    write_text(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  }
};

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string config;
  std::uint32_t layers = 0, experts = 0, hidden = 0, intermediate = 0, top_k = 0;
  std::string mode = "gaussian";
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;
  double weight_std = 1.0;
  std::uint32_t m = 0;
  std::uint32_t rank = 0;
  std::string activation = "silu";
  std::uint32_t groups = 1;
  double basis_std = 1.0;
};

int generate(const GenerateArgs& a, Manifest& manifest, std::ostream& out) {
  MoEConfig config;
  if (!a.config.empty()) {
    config = moe_config_from(read_json(a.config));
    manifest.inputs.push_back(a.config);
  }
  for (auto [flag, slot] : {std::pair{a.layers, &config.layers}, {a.experts, &config.experts},
                            {a.hidden, &config.hidden}, {a.intermediate, &config.intermediate},
                            {a.top_k, &config.top_k}}) {
    if (flag != 0) *slot = flag;
  }
  config.validate();

  SyntheticOptions opts;
  opts.mode = parse_synthetic_mode(a.mode);
  opts.seed = a.seed;
  opts.weight_std = a.weight_std;
  opts.basis_count = a.m;
  opts.rank = a.rank == 0 ? config.intermediate : a.rank;
  opts.groups = a.groups;
  opts.activation = parse_activation(a.activation);
  opts.basis_std = a.basis_std;
  const auto synthetic = generate_synthetic(config, opts);

  Outputs outputs;
  write_checkpoint(outputs.add(a.out), synthetic.model);
  fs::path truth_path;
  if (synthetic.truth) {
    truth_path = a.truth.empty() ? sibling(a.out, ".truth.mobe") : fs::path(a.truth);
    write_compressed(outputs.add(truth_path), *synthetic.truth);
  }

  manifest.config = {{"model", to_json(config)}, {"mode", a.mode}, {"weight_std", a.weight_std}};
  if (synthetic.truth) {
    manifest.config["planted"] = {{"basis_count", opts.basis_count}, {"rank", opts.rank}, {"groups", opts.groups},
                                  {"activation", to_string(opts.activation)}, {"basis_std", opts.basis_std}};
  }
  manifest.seeds = {{"seed", a.seed}};
  const auto manifest_path = sibling(a.out, ".manifest.json");
  manifest.write(outputs.add(manifest_path), outputs);
  outputs.commit();

  json summary{{"command", "generate"}, {"out", a.out}, {"parameters", expert_parameter_count(synthetic.model)}};
  if (synthetic.truth) summary["truth"] = truth_path.string();
  out << summary.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- compress

struct CompressArgs {
  std::string in;
  std::string out;
  std::string config;
  std::string method = "mobe";
  std::uint32_t m = 0;
  std::uint32_t rank = 0;
  std::string activation = "silu";
  double lr = 0.07;
  std::size_t steps = 5000;
  std::uint32_t groups = 1;
  std::uint64_t seed = 0;
  std::string schedule = "cosine";
  std::size_t jobs = 1;
  bool keep_mu = false;
  bool mu_matrix = false;
  bool no_normalize = false;
  bool early_stop = false;
  bool equal_budget = false;
  std::uint32_t latents = 0;
  std::vector<double> weights;

  // Set for options given on the command line (they override --config).
  std::map<std::string, bool> given;
  bool has(const std::string& name) const { return given.count(name) != 0; }
};

void write_trace_csv(const fs::path& path, const ConversionResult& result) {
  write_text(path, [&](std::ostream& out) {
    out << "layer,type,step,loss\n";
    out.precision(17);
    for (const auto& t : result.traces) {
      for (std::size_t s = 0; s < t.trace.losses.size(); ++s) {
        out << t.layer << ',' << to_string(t.type) << ',' << s << ',' << t.trace.losses[s] << '\n';
      }
    }
  });
}

int compress(const CompressArgs& a, Manifest& manifest, std::ostream& out, std::ostream& err) {
  const MoEModel model = read_checkpoint(a.in);
  manifest.inputs.push_back(a.in);
  const auto& mc = model.config;
  const Method method = parse_method(a.method);

  FactorizeConfig fc;
  if (!a.config.empty()) {
    fc = factorize_config_from(read_json(a.config));
    manifest.inputs.push_back(a.config);
  }
  if (a.has("--m")) fc.basis_count = a.m;
  if (a.has("--rank")) fc.rank = a.rank;
  if (a.has("--activation")) fc.activation = parse_activation(a.activation);
  if (a.has("--lr")) fc.adam.lr = a.lr;
  if (a.has("--steps")) fc.steps = a.steps;
  if (a.has("--group-split")) fc.groups = a.groups;
  if (a.has("--seed")) fc.seed = a.seed;
  if (a.has("--schedule")) fc.schedule = parse_lr_schedule(a.schedule);
  if (a.keep_mu) fc.keep_mu = true;
  if (a.mu_matrix) fc.mean_mode = MeanMode::kMatrix;
  if (a.no_normalize) fc.normalize = false;
  if (a.early_stop) fc.early_stop = true;

  Outputs outputs;
  json summary{{"command", "compress"}, {"method", to_string(method)}, {"out", a.out}};
  json seeds{{"seed", fc.seed}};

  if (method == Method::kMobe) {
    if (fc.basis_count == 0) throw ArgumentError("--m is required for mobe");
    fc.validate(mc.experts, mc.intermediate);
    const auto result = convert_model(model, fc, a.jobs, [&](const std::string& line) { err << line << '\n'; });
    write_compressed(outputs.add(a.out), result.model);
    write_trace_csv(outputs.add(sibling(a.out, ".trace.csv")), result);

    json layers = json::array();
    json task_seeds = json::array();
    for (const auto& t : result.traces) {
      layers.push_back({{"layer", t.layer},
                        {"type", to_string(t.type)},
                        {"relative_error", t.trace.relative_error()},
                        {"final_loss", t.trace.final_loss},
                        {"steps", t.trace.losses.size()},
                        {"seconds", t.trace.seconds}});
      task_seeds.push_back(task_seed(fc.seed, t.layer, t.type));
    }
    seeds["task_seeds"] = task_seeds;
    summary["layers"] = layers;
    summary["parameters"] = expert_parameter_count(result.model);
    manifest.config = {{"model", to_json(mc)}, {"method", "mobe"}, {"factorize", to_json(fc)}, {"jobs", a.jobs}};
  } else {
    BaselineConfig bc;
    bc.method = method;
    bc.latent_count = a.latents != 0 ? a.latents : fc.basis_count;
    if (method == Method::kMolae && bc.latent_count == 0) throw ArgumentError("--latents (or --m) is required for molae");
    bc.weights = a.weights;
    if (a.equal_budget) {
      if (fc.basis_count == 0) throw ArgumentError("--equal-budget needs the reference MoBE --m");
      fc.validate(mc.experts, mc.intermediate);
      const std::size_t budget = mobe_parameter_count(mc.experts, mc.intermediate, mc.hidden,
                                                      fc.resolved_rank(mc.intermediate), fc.basis_count);
      bc.rank = equal_budget_rank(method, mc.experts, mc.intermediate, mc.hidden, budget, bc.latent_count);
      summary["budget"] = budget;
    } else {
      if (fc.rank == 0) throw ArgumentError("--rank is required for " + a.method + " without --equal-budget");
      bc.rank = fc.rank;
    }
    const auto result = compress_baseline(model, bc);
    write_compressed(outputs.add(a.out), result.model);

    json layers = json::array();
    for (const auto& r : result.results) {
      double energy = 0.0;
      for (const auto& w : model.layers[r.layer].weights(r.type)) energy += frobenius_sq(w);
      layers.push_back({{"layer", r.layer},
                        {"type", to_string(r.type)},
                        {"relative_error", energy > 0.0 ? r.result.squared_error / energy : 0.0},
                        {"squared_error", r.result.squared_error}});
    }
    summary["rank"] = bc.rank;
    summary["layers"] = layers;
    summary["parameters"] = expert_parameter_count(result.model);
    manifest.config = {{"model", to_json(mc)},
                       {"method", a.method},
                       {"rank", bc.rank},
                       {"latent_count", method == Method::kMolae ? bc.latent_count : 0},
                       {"weights", bc.weights},
                       {"equal_budget", a.equal_budget}};
  }

  manifest.seeds = seeds;
  manifest.write(outputs.add(sibling(a.out, ".manifest.json")), outputs);
  outputs.commit();
  out << summary.dump() << '\n';
  return kOk;
}

// ------------------------------------------------------------ analyze-rank

int analyze_rank(const std::string& in, double threshold, const std::string& out_path, Manifest& manifest,
                 std::ostream& out) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("--threshold must lie in (0, 1)");
  const auto model = read_checkpoint(in);
  manifest.inputs.push_back(in);
  const auto rows = rank_report(model, threshold);

  Outputs outputs;
  write_text(outputs.add(out_path), [&](std::ostream& o) { write_rank_csv(o, rows); });
  manifest.config = {{"threshold", threshold}};
  manifest.write(outputs.add(sibling(out_path, ".manifest.json")), outputs);
  outputs.commit();
  out << json{{"command", "analyze-rank"}, {"out", out_path}, {"rows", rows.size()}}.dump() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ report

ModelVariant load_variant(const fs::path& path) {
  if (detect_container(path) == ContainerKind::kMoE) return {"moe", read_checkpoint(path)};
  auto model = read_compressed(path);
  return {std::string(to_string(model.spec.method)), std::move(model)};
}

int report(const std::string& original_path, const std::vector<std::string>& variant_paths,
           const std::string& out_path, std::string params_path, std::uint32_t k_prime, Manifest& manifest,
           std::ostream& out) {
  const auto original = read_checkpoint(original_path);
  manifest.inputs.push_back(original_path);
  std::vector<ModelVariant> variants;
  std::map<std::string, int> seen;
  for (const auto& p : variant_paths) {
    auto v = load_variant(p);
    if (const int count = ++seen[v.label]; count > 1) v.label += "#" + std::to_string(count);
    variants.push_back(std::move(v));
    manifest.inputs.push_back(p);
  }
  const auto mse = mse_report(original, variants);
  const auto params = param_report(original, variants,
                                   k_prime != 0 ? std::optional<std::uint32_t>(k_prime) : std::nullopt);

  if (params_path.empty()) {
    const fs::path o(out_path);
    params_path = (o.parent_path() / (o.stem().string() + ".params.csv")).string();
  }
  Outputs outputs;
  write_text(outputs.add(out_path), [&](std::ostream& o) { write_mse_csv(o, mse); });
  write_text(outputs.add(params_path), [&](std::ostream& o) { write_param_csv(o, params); });
  manifest.config = {{"k_prime", k_prime}};
  manifest.write(outputs.add(sibling(out_path, ".manifest.json")), outputs);
  outputs.commit();

  json methods = json::object();
  for (const auto& v : variants) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& row : mse) {
      if (row.method == v.label) {
        total += row.mse;
        ++count;
      }
    }
    methods[v.label] = count ? total / double(count) : 0.0;
  }
  out << json{{"command", "report"}, {"out", out_path}, {"params", params_path}, {"mean_mse", methods}}.dump() << '\n';
  return kOk;
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
  std::string original;
  std::string compressed;
  std::size_t tokens = 256;
  std::string tokens_file;
  std::uint64_t seed = 0;
  std::uint32_t k_override = 0;
  bool renormalize = false;
  double rel_tol = 1e-4;
  double path_tol = 1e-5;
};

int verify(const VerifyArgs& a, std::ostream& out) {
  const auto original = read_checkpoint(a.original);
  const auto variant = load_variant(a.compressed);
  const auto& oc = original.config;
  const MoEConfig& vc = std::visit([](const auto& m) -> const MoEConfig& { return m.config; }, variant.model);
  if (oc.layers != vc.layers || oc.experts != vc.experts || oc.hidden != vc.hidden ||
      oc.intermediate != vc.intermediate) {
    throw ShapeError("compressed model dimensions differ from the original");
  }

  const Matrix tokens = a.tokens_file.empty() ? random_tokens(a.tokens, oc.hidden, a.seed) : read_tokens(a.tokens_file);
  if (tokens.cols() != oc.hidden) throw ShapeError("token width does not match the model hidden size");

  ForwardOptions reference;
  reference.renormalize = a.renormalize;
  ForwardOptions candidate = reference;
  if (a.k_override != 0) candidate.k_override = a.k_override;

  bool ok = true;
  json layers = json::array();
  for (std::size_t l = 0; l < oc.layers; ++l) {
    const Matrix y0 = moe_forward(original, l, tokens, reference);
    json row{{"layer", l}};
    Matrix y1;
    if (const auto* moe = std::get_if<MoEModel>(&variant.model)) {
      y1 = moe_forward(*moe, l, tokens, candidate);
    } else {
      const auto& cm = std::get<CompressedModel>(variant.model);
      y1 = moe_forward(cm, l, tokens, candidate);
      ForwardOptions dense = candidate;
      dense.materialize = true;
      const double path = max_abs_diff(y1, moe_forward(cm, l, tokens, dense));
      row["path_max_abs"] = path;
      ok = ok && path <= a.path_tol;
    }
    const double ref = std::sqrt(frobenius_sq(y0));
    const double delta = std::sqrt(frobenius_dist_sq(y0, y1));
    const double rel = ref > 0.0 ? delta / ref : delta;
    row["max_abs"] = max_abs_diff(y0, y1);
    row["relative"] = rel;
    ok = ok && rel <= a.rel_tol;
    layers.push_back(row);
  }
  out << json{{"command", "verify"}, {"tokens", tokens.rows()}, {"within_tolerance", ok}, {"layers", layers}}.dump()
      << '\n';
  return ok ? kOk : kNumeric;
}

// ------------------------------------------------------------------- stats

int stats(const std::string& in, const std::string& out_path, Manifest& manifest, std::ostream& out) {
  const auto model = read_checkpoint(in);
  manifest.inputs.push_back(in);
  const auto rows = stats_report(model);
  Outputs outputs;
  write_text(outputs.add(out_path), [&](std::ostream& o) { write_stats_csv(o, rows); });
  manifest.write(outputs.add(sibling(out_path, ".manifest.json")), outputs);
  outputs.commit();

  json summary = json::array();
  for (const auto& r : rows) {
    summary.push_back({{"layer", r.layer}, {"type", to_string(r.type)}, {"mu", r.stats.mu}, {"sigma", r.stats.sigma}});
  }
  out << json{{"command", "stats"}, {"out", out_path}, {"rows", summary}}.dump() << '\n';
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int replay(const std::string& manifest_path, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw ArgumentError("a manifest cannot replay another replay");
  const auto j = read_json(manifest_path);
  if (!j.contains("argv") || !j["argv"].is_array()) throw ArgumentError(manifest_path + ": manifest has no argv");
  std::vector<std::string> argv;
  try {
    argv = j["argv"].get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw ArgumentError(manifest_path + ": argv must be a list of strings");
  }
  return dispatch(argv, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Shared-basis compression of mixture-of-experts weights", "mobe"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic MoE checkpoint");
  g->add_option("--config", gen.config, "Model config JSON");
  g->add_option("--layers", gen.layers, "Override layers");
  g->add_option("--experts", gen.experts, "Override experts");
  g->add_option("--hidden", gen.hidden, "Override hidden size d");
  g->add_option("--intermediate", gen.intermediate, "Override intermediate size p");
  g->add_option("--top-k", gen.top_k, "Override activated experts k");
  g->add_option("--mode", gen.mode, "gaussian or planted")->check(CLI::IsMember({"gaussian", "planted"}));
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Output checkpoint")->required();
  g->add_option("--truth", gen.truth, "Ground-truth output (planted; default <out>.truth.mobe)");
  g->add_option("--weight-std", gen.weight_std, "Entry std in gaussian mode");
  g->add_option("--m", gen.m, "Planted basis count");
  g->add_option("--rank", gen.rank, "Planted rank (0 means p)");
  g->add_option("--activation", gen.activation, "Planted activation");
  g->add_option("--group-split", gen.groups, "Planted group count");
  g->add_option("--basis-std", gen.basis_std, "Planted basis entry std");

  CompressArgs cmp;
  cmp.jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* c = app.add_subcommand("compress", "Compress gate/up projections of a checkpoint");
  std::vector<CLI::Option*> tracked;
  c->add_option("--in", cmp.in, "Input MoE checkpoint")->required();
  c->add_option("--out", cmp.out, "Output compressed container")->required();
  c->add_option("--config", cmp.config, "Factorize config JSON");
  c->add_option("--method", cmp.method, "mobe, svd, molae or d2moe")
      ->check(CLI::IsMember({"mobe", "svd", "molae", "d2moe"}));
  tracked.push_back(c->add_option("--m", cmp.m, "Basis count (MoBE) or reference m"));
  tracked.push_back(c->add_option("--rank", cmp.rank, "Rank r (MoBE: 0 means p) or baseline rank"));
  tracked.push_back(c->add_option("--activation", cmp.activation, "silu, tanh, gelu, relu, sigmoid or none"));
  tracked.push_back(c->add_option("--lr", cmp.lr, "Adam learning rate"));
  tracked.push_back(c->add_option("--steps", cmp.steps, "Adam steps"));
  tracked.push_back(c->add_option("--group-split", cmp.groups, "Expert groups with separate bases"));
  tracked.push_back(c->add_option("--seed", cmp.seed, "Random seed"));
  tracked.push_back(c->add_option("--schedule", cmp.schedule, "Learning-rate schedule: cosine or constant"));
  c->add_option("--jobs", cmp.jobs, "Worker threads (1 for determinism mode)")->check(CLI::PositiveNumber);
  c->add_flag("--keep-mu", cmp.keep_mu, "Store the scalar mean as a bias");
  c->add_flag("--mu-matrix", cmp.mu_matrix, "Normalize with a per-entry mean matrix (stored)");
  c->add_flag("--no-normalize", cmp.no_normalize, "Factorize raw weights");
  c->add_flag("--early-stop", cmp.early_stop, "Stop when the loss stalls");
  c->add_flag("--equal-budget", cmp.equal_budget, "Baselines: match the parameter budget of MoBE (--m, --rank)");
  c->add_option("--latents", cmp.latents, "MoLAE latent count (default --m)");
  c->add_option("--weights", cmp.weights, "D2-MoE per-expert weights")->delimiter(',');

  std::string rank_in, rank_out;
  double threshold = 0.95;
  auto* r = app.add_subcommand("analyze-rank", "Effective-rank report of a checkpoint");
  r->add_option("--in", rank_in, "Input MoE checkpoint")->required();
  r->add_option("--threshold", threshold, "Energy threshold");
  r->add_option("--out", rank_out, "Output CSV")->required();

  std::string rep_original, rep_out, rep_params;
  std::vector<std::string> rep_variants;
  std::uint32_t rep_k = 0;
  auto* p = app.add_subcommand("report", "MSE and parameter tables against the original");
  p->add_option("--original", rep_original, "Original MoE checkpoint")->required();
  p->add_option("--variants", rep_variants, "Compressed containers")->required();
  p->add_option("--out", rep_out, "MSE CSV")->required();
  p->add_option("--params-out", rep_params, "Parameter CSV (default <out stem>.params.csv)");
  p->add_option("--k-prime", rep_k, "Reduced activated experts for the MoBE-dagger row");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Compare forward passes of original and compressed models");
  v->add_option("--original", ver.original, "Original MoE checkpoint")->required();
  v->add_option("--compressed", ver.compressed, "Compressed container or MoE checkpoint")->required();
  v->add_option("--tokens", ver.tokens, "Random token count")->check(CLI::PositiveNumber);
  v->add_option("--tokens-file", ver.tokens_file, "Token batch file instead of random tokens");
  v->add_option("--seed", ver.seed, "Token seed");
  v->add_option("--k-override", ver.k_override, "Activated experts k' for the compressed model");
  v->add_flag("--renorm-topk,--renormalize", ver.renormalize, "Renormalize top-k gates");
  v->add_option("--rel-tol", ver.rel_tol, "Relative output tolerance");
  v->add_option("--path-tol", ver.path_tol, "Factorized vs materialized max-abs tolerance");

  std::string stats_in, stats_out;
  auto* s = app.add_subcommand("stats", "Per-layer weight mean and std");
  s->add_option("--in", stats_in, "Input MoE checkpoint")->required();
  s->add_option("--out", stats_out, "Output CSV")->required();

  std::string manifest_path;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rp->add_option("manifest", manifest_path, "Manifest JSON")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "mobe: error: " << one_line(e.what()) << '\n';
    return kUsage;
  }

  Manifest manifest;
  manifest.argv = args;
  manifest.command = app.get_subcommands().front()->get_name();

  if (*g) return generate(gen, manifest, out);
  if (*c) {
    for (const auto* opt : tracked) {
      if (opt->count() > 0) cmp.given[opt->get_name()] = true;
    }
    return compress(cmp, manifest, out, err);
  }
  if (*r) return analyze_rank(rank_in, threshold, rank_out, manifest, out);
  if (*p) return report(rep_original, rep_variants, rep_out, rep_params, rep_k, manifest, out);
  if (*v) return verify(ver, out);
  if (*s) return stats(stats_in, stats_out, manifest, out);
  return replay(manifest_path, out, err, depth);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const ArgumentError& e) {
    err << "mobe: error: " << one_line(e.what()) << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "mobe: I/O error: " << one_line(e.what()) << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "mobe: I/O error: " << one_line(e.what()) << '\n';
    return kIo;
  } catch (const NumericError& e) {
    err << "mobe: numeric error: " << one_line(e.what()) << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "mobe: error: " << one_line(e.what()) << '\n';
    return kNumeric;
  }
}

}  // namespace mobe::cli
