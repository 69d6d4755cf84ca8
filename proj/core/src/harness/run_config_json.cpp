#include "expert/harness/run_config_json.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "expert/errors.hpp"

namespace expert::harness {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) fail(path + "." + key, "unknown key");
  }
}

template <typename T>
void get_to(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    fail(path + "." + key, e.what());
  }
}

void get_enum(const json& obj, const std::string& path, const char* key, std::string& out) {
  get_to(obj, path, key, out);
}

void parse_backbone(const json& j, const std::string& path, BackboneConfig& out) {
  check_keys(j, path, {"kind", "input_resolution", "seed", "zero_positional_embedding", "stages"});
  std::string kind = out.kind == BackboneConfig::Kind::multi_scale ? "multi_scale" : "single_scale";
  get_enum(j, path, "kind", kind);
  if (kind == "multi_scale") {
    out.kind = BackboneConfig::Kind::multi_scale;
  } else if (kind == "single_scale") {
    out.kind = BackboneConfig::Kind::single_scale;
  } else {
    fail(path + ".kind", "expected 'multi_scale' or 'single_scale', got '" + kind + "'");
  }
  get_to(j, path, "input_resolution", out.input_resolution);
  get_to(j, path, "seed", out.seed);
  get_to(j, path, "zero_positional_embedding", out.zero_positional_embedding);
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) fail(path + ".stages", "expected an array");
    out.stages.clear();
    int i = 0;
    for (const json& js : j.at("stages")) {
      const std::string spath = path + ".stages[" + std::to_string(i++) + "]";
      check_keys(js, spath, {"depth", "embed_dim", "num_heads", "reduction"});
      StageSpec spec;
      get_to(js, spath, "depth", spec.depth);
      get_to(js, spath, "embed_dim", spec.embed_dim);
      get_to(js, spath, "num_heads", spec.num_heads);
      get_to(js, spath, "reduction", spec.reduction);
      out.stages.push_back(spec);
    }
  }
}

void parse_peft(const json& j, const std::string& path, PeftConfig& out) {
  check_keys(j, path,
             {"adapter_bottleneck_ratio", "adapter_bias", "attachment_sites", "alpha_init",
              "alpha_trainable"});
  get_to(j, path, "adapter_bottleneck_ratio", out.adapter_bottleneck_ratio);
  get_to(j, path, "adapter_bias", out.adapter_bias);
  get_to(j, path, "alpha_init", out.alpha_init);
  get_to(j, path, "alpha_trainable", out.alpha_trainable);
  if (j.contains("attachment_sites")) {
    const json& js = j.at("attachment_sites");
    if (js.is_string() && js.get<std::string>() == "all") {
      out.attach_all_sites = true;
      out.attachment_sites.clear();
    } else if (js.is_array()) {
      out.attach_all_sites = false;
      out.attachment_sites.clear();
      for (const json& site : js) {
        if (!site.is_array() || site.size() != 2) {
          fail(path + ".attachment_sites", "expected [stage, block] pairs");
        }
        out.attachment_sites.emplace_back(site.at(0).get<int>(), site.at(1).get<int>());
      }
    } else {
      fail(path + ".attachment_sites", "expected \"all\" or an array of [stage, block] pairs");
    }
  }
}

void parse_source(const json& j, const std::string& path, PromptSourceConfig& out) {
  check_keys(j, path,
             {"name", "dim", "layout", "tokens", "grid", "provider", "synthetic_mode",
              "cross_attention"});
  get_to(j, path, "name", out.name);
  get_to(j, path, "dim", out.dim);
  std::string layout = out.layout == PromptSourceConfig::Layout::tokens ? "tokens" : "grid";
  get_enum(j, path, "layout", layout);
  if (layout == "tokens") {
    out.layout = PromptSourceConfig::Layout::tokens;
  } else if (layout == "grid") {
    out.layout = PromptSourceConfig::Layout::grid;
  } else {
    fail(path + ".layout", "expected 'tokens' or 'grid'");
  }
  get_to(j, path, "tokens", out.tokens);
  get_to(j, path, "grid", out.grid);
  std::string provider = out.provider == PromptSourceConfig::Provider::file ? "file" : "synthetic";
  get_enum(j, path, "provider", provider);
  if (provider == "file") {
    out.provider = PromptSourceConfig::Provider::file;
  } else if (provider == "synthetic") {
    out.provider = PromptSourceConfig::Provider::synthetic;
  } else {
    fail(path + ".provider", "expected 'file' or 'synthetic'");
  }
  std::string mode =
      out.synthetic_mode == PromptSourceConfig::SyntheticMode::pooled ? "pooled" : "noise";
  get_enum(j, path, "synthetic_mode", mode);
  if (mode == "pooled") {
    out.synthetic_mode = PromptSourceConfig::SyntheticMode::pooled;
  } else if (mode == "noise") {
    out.synthetic_mode = PromptSourceConfig::SyntheticMode::noise;
  } else {
    fail(path + ".synthetic_mode", "expected 'pooled' or 'noise'");
  }
  get_to(j, path, "cross_attention", out.cross_attention);
}

void parse_prompts(const json& j, const std::string& path, PromptsConfig& out) {
  check_keys(j, path, {"dir", "sources", "text", "cross_attention"});
  get_to(j, path, "dir", out.dir);
  if (j.contains("sources")) {
    if (!j.at("sources").is_array()) fail(path + ".sources", "expected an array");
    out.sources.clear();
    int i = 0;
    for (const json& js : j.at("sources")) {
      PromptSourceConfig src;
      parse_source(js, path + ".sources[" + std::to_string(i++) + "]", src);
      out.sources.push_back(std::move(src));
    }
  }
  if (j.contains("text")) {
    const json& jt = j.at("text");
    const std::string tpath = path + ".text";
    check_keys(jt, tpath, {"provider", "dim", "tokens"});
    std::string provider = out.text.provider == TextConfig::Provider::file ? "file" : "synthetic";
    get_enum(jt, tpath, "provider", provider);
    if (provider == "file") {
      out.text.provider = TextConfig::Provider::file;
    } else if (provider == "synthetic") {
      out.text.provider = TextConfig::Provider::synthetic;
    } else {
      fail(tpath + ".provider", "expected 'file' or 'synthetic'");
    }
    get_to(jt, tpath, "dim", out.text.dim);
    get_to(jt, tpath, "tokens", out.text.tokens);
  }
  if (j.contains("cross_attention")) {
    const json& jc = j.at("cross_attention");
    const std::string cpath = path + ".cross_attention";
    check_keys(jc, cpath, {"layers", "heads", "width"});
    get_to(jc, cpath, "layers", out.cross_attention.layers);
    get_to(jc, cpath, "heads", out.cross_attention.heads);
    get_to(jc, cpath, "width", out.cross_attention.width);
  }
}

void parse_decoder(const json& j, const std::string& path, DecoderConfig& out) {
  check_keys(j, path, {"common_dim", "fuse_dim", "fuse_norm", "fuse_activation"});
  get_to(j, path, "common_dim", out.common_dim);
  get_to(j, path, "fuse_dim", out.fuse_dim);
  std::string norm = out.fuse_norm == DecoderConfig::Norm::layer ? "layer" : "none";
  get_enum(j, path, "fuse_norm", norm);
  if (norm == "layer") {
    out.fuse_norm = DecoderConfig::Norm::layer;
  } else if (norm == "none") {
    out.fuse_norm = DecoderConfig::Norm::none;
  } else {
    fail(path + ".fuse_norm", "expected 'layer' or 'none'");
  }
  std::string act = out.fuse_activation == DecoderConfig::Activation::relu ? "relu" : "identity";
  get_enum(j, path, "fuse_activation", act);
  if (act == "relu") {
    out.fuse_activation = DecoderConfig::Activation::relu;
  } else if (act == "identity") {
    out.fuse_activation = DecoderConfig::Activation::identity;
  } else {
    fail(path + ".fuse_activation", "expected 'relu' or 'identity'");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = RunConfig::desk_default();
  check_keys(j, "$",
             {"seed", "backbone", "peft", "prompts", "decoder", "loss", "optimizer", "train"});
  get_to(j, "$", "seed", cfg.seed);
  if (j.contains("backbone")) parse_backbone(j.at("backbone"), "backbone", cfg.backbone);
  if (j.contains("peft")) parse_peft(j.at("peft"), "peft", cfg.peft);
  if (j.contains("prompts")) parse_prompts(j.at("prompts"), "prompts", cfg.prompts);
  if (j.contains("decoder")) parse_decoder(j.at("decoder"), "decoder", cfg.decoder);
  if (j.contains("loss")) {
    check_keys(j.at("loss"), "loss", {"bce", "iou"});
    get_to(j.at("loss"), "loss", "bce", cfg.loss.bce);
    get_to(j.at("loss"), "loss", "iou", cfg.loss.iou);
  }
  if (j.contains("optimizer")) {
    const json& jo = j.at("optimizer");
    check_keys(jo, "optimizer", {"learning_rate", "weight_decay", "beta1", "beta2", "eps"});
    get_to(jo, "optimizer", "learning_rate", cfg.optimizer.learning_rate);
    get_to(jo, "optimizer", "weight_decay", cfg.optimizer.weight_decay);
    get_to(jo, "optimizer", "beta1", cfg.optimizer.beta1);
    get_to(jo, "optimizer", "beta2", cfg.optimizer.beta2);
    get_to(jo, "optimizer", "eps", cfg.optimizer.eps);
  }
  if (j.contains("train")) {
    const json& jt = j.at("train");
    check_keys(jt, "train",
               {"data_root", "out_dir", "steps", "batch_size", "resolution", "log_every",
                "checkpoint_every", "skip_undecodable"});
    get_to(jt, "train", "data_root", cfg.train.data_root);
    get_to(jt, "train", "out_dir", cfg.train.out_dir);
    get_to(jt, "train", "steps", cfg.train.steps);
    get_to(jt, "train", "batch_size", cfg.train.batch_size);
    get_to(jt, "train", "resolution", cfg.train.resolution);
    get_to(jt, "train", "log_every", cfg.train.log_every);
    get_to(jt, "train", "checkpoint_every", cfg.train.checkpoint_every);
    get_to(jt, "train", "skip_undecodable", cfg.train.skip_undecodable);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open config file: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;

  json jb;
  jb["kind"] = cfg.backbone.kind == BackboneConfig::Kind::multi_scale ? "multi_scale"
                                                                      : "single_scale";
  jb["input_resolution"] = cfg.backbone.input_resolution;
  jb["seed"] = cfg.backbone.seed;
  jb["zero_positional_embedding"] = cfg.backbone.zero_positional_embedding;
  jb["stages"] = json::array();
  for (const StageSpec& s : cfg.backbone.stages) {
    jb["stages"].push_back({{"depth", s.depth},
                            {"embed_dim", s.embed_dim},
                            {"num_heads", s.num_heads},
                            {"reduction", s.reduction}});
  }
  j["backbone"] = jb;

  json jp;
  jp["adapter_bottleneck_ratio"] = cfg.peft.adapter_bottleneck_ratio;
  jp["adapter_bias"] = cfg.peft.adapter_bias;
  if (cfg.peft.attach_all_sites) {
    jp["attachment_sites"] = "all";
  } else {
    json sites = json::array();
    for (const auto& [stage, block] : cfg.peft.attachment_sites) {
      sites.push_back(json::array({stage, block}));
    }
    jp["attachment_sites"] = sites;
  }
  jp["alpha_init"] = cfg.peft.alpha_init;
  jp["alpha_trainable"] = cfg.peft.alpha_trainable;
  j["peft"] = jp;

  json jpr;
  jpr["dir"] = cfg.prompts.dir;
  jpr["sources"] = json::array();
  for (const PromptSourceConfig& s : cfg.prompts.sources) {
    json js;
    js["name"] = s.name;
    js["dim"] = s.dim;
    js["layout"] = s.layout == PromptSourceConfig::Layout::tokens ? "tokens" : "grid";
    js["tokens"] = s.tokens;
    js["grid"] = s.grid;
    js["provider"] = s.provider == PromptSourceConfig::Provider::file ? "file" : "synthetic";
    js["synthetic_mode"] =
        s.synthetic_mode == PromptSourceConfig::SyntheticMode::pooled ? "pooled" : "noise";
    js["cross_attention"] = s.cross_attention;
    jpr["sources"].push_back(js);
  }
  jpr["text"] = {{"provider", cfg.prompts.text.provider == TextConfig::Provider::file
                                  ? "file"
                                  : "synthetic"},
                 {"dim", cfg.prompts.text.dim},
                 {"tokens", cfg.prompts.text.tokens}};
  jpr["cross_attention"] = {{"layers", cfg.prompts.cross_attention.layers},
                            {"heads", cfg.prompts.cross_attention.heads},
                            {"width", cfg.prompts.cross_attention.width}};
  j["prompts"] = jpr;

  j["decoder"] = {
      {"common_dim", cfg.decoder.common_dim},
      {"fuse_dim", cfg.decoder.fuse_dim},
      {"fuse_norm", cfg.decoder.fuse_norm == DecoderConfig::Norm::layer ? "layer" : "none"},
      {"fuse_activation",
       cfg.decoder.fuse_activation == DecoderConfig::Activation::relu ? "relu" : "identity"}};

  j["loss"] = {{"bce", cfg.loss.bce}, {"iou", cfg.loss.iou}};
  j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps}};
  j["train"] = {{"data_root", cfg.train.data_root},
                {"out_dir", cfg.train.out_dir},
                {"steps", cfg.train.steps},
                {"batch_size", cfg.train.batch_size},
                {"resolution", cfg.train.resolution},
                {"log_every", cfg.train.log_every},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"skip_undecodable", cfg.train.skip_undecodable}};
  return j.dump(2);
}

}  // namespace expert::harness
