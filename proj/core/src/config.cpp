#include "layoutgen/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"

namespace layoutgen {

using nlohmann::ordered_json;

namespace {

class SectionReader {
 public:
  SectionReader(const ordered_json& obj, std::string path) : obj_(obj), path_(std::move(path)) {}

  ~SectionReader() = default;

  void finish() const {
    for (const auto& [key, _] : obj_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw InvalidInputError("config: unknown key \"" + path_ + "." + key + "\"");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.push_back(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidInputError("config: bad value for \"" + path_ + "." + std::string(key) + "\"");
    }
  }

 private:
  const ordered_json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace

CliConfig parse_cli_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidInputError("config: not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "graph" && key != "training" && key != "validation" && key != "tokenizer")
      throw InvalidInputError("config: unknown key \"" + key + "\"");
  }

  CliConfig cfg;
  if (j.contains("graph")) {
    SectionReader r(j["graph"], "graph");
    r.read("tau_align", cfg.graph.tau_align);
    r.read("tau_prox", cfg.graph.tau_prox);
    r.read("k_nn", cfg.graph.k_nn);
    r.read("tau_cap", cfg.graph.tau_cap);
    r.read("self_loop", cfg.graph.self_loop);
    r.finish();
    if (cfg.graph.tau_align <= 0.0 || cfg.graph.tau_prox <= 0.0 || cfg.graph.tau_cap <= 0.0 ||
        cfg.graph.k_nn <= 0)
      throw InvalidInputError("config: graph thresholds must be positive");
  }
  if (j.contains("training")) {
    SectionReader r(j["training"], "training");
    r.read("beta", cfg.training.beta);
    r.read("lambda", cfg.training.lambda);
    r.read("gamma", cfg.training.gamma);
    std::string objective(to_string(cfg.training.gen_objective));
    r.read("gen_objective", objective);
    const auto parsed = parse_gen_objective(objective);
    if (!parsed)
      throw InvalidInputError("config: training.gen_objective must be \"minimax\" or "
                              "\"non_saturating\"");
    cfg.training.gen_objective = *parsed;
    r.read("d_hidden", cfg.training.d_hidden);
    r.read("d_latent", cfg.training.d_latent);
    r.read("layers", cfg.training.layers);
    r.read("n_max", cfg.training.n_max);
    r.read("epochs", cfg.training.epochs);
    r.read("batch_size", cfg.training.batch_size);
    r.read("lr", cfg.training.lr);
    r.read("seed", cfg.training.seed);
    r.finish();
    if (cfg.training.beta < 0.0 || cfg.training.lambda < 0.0 || cfg.training.gamma < 0.0)
      throw InvalidInputError("config: training weights must be >= 0");
    if (cfg.training.epochs < 0 || cfg.training.batch_size < 1)
      throw InvalidInputError("config: training.epochs must be >= 0 and batch_size >= 1");
  }
  if (j.contains("validation")) {
    SectionReader r(j["validation"], "validation");
    std::vector<std::string> rules{"R1", "R2", "R3", "R4"};
    bool had_rules = j["validation"].contains("rules");
    r.read("rules", rules);
    r.read("iou_max", cfg.validation.iou_max);
    r.read("tau_cap", cfg.validation.tau_cap);
    r.finish();
    if (had_rules || !rules.empty()) {
      cfg.validation.enabled.clear();
      for (const std::string& name : rules) {
        bool known = false;
        for (int k = 0; k < 4; ++k) {
          if (name == to_string(static_cast<RuleId>(k))) {
            cfg.validation.enabled.insert(static_cast<RuleId>(k));
            known = true;
          }
        }
        if (!known)
          throw InvalidInputError("config: validation.rules contains unknown rule \"" + name + "\"");
      }
    }
    if (cfg.validation.iou_max < 0.0 || cfg.validation.iou_max > 1.0)
      throw InvalidInputError("config: validation.iou_max must be in [0,1]");
    if (cfg.validation.tau_cap <= 0.0)
      throw InvalidInputError("config: validation.tau_cap must be positive");
  }
  if (j.contains("tokenizer")) {
    SectionReader r(j["tokenizer"], "tokenizer");
    r.read("grid", cfg.tokenizer.grid);
    r.finish();
    if (cfg.tokenizer.grid < 1) throw InvalidInputError("config: tokenizer.grid must be >= 1");
  }
  return cfg;
}

CliConfig load_cli_config(const std::string& path) { return parse_cli_config(read_file(path)); }

}  // namespace layoutgen
