#pragma once

#include <string>

#include "layoutgen/graph.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/model.hpp"
#include "layoutgen/synthesis.hpp"

namespace layoutgen {

// One JSON document with optional "graph", "training", "validation" and
// "tokenizer" sections; every field is optional and defaults apply. Unknown
// keys are rejected with their path.
struct CliConfig {
  GraphConfig graph;
  TrainingConfig training;
  ValidationRuleConfig validation;
  TokenizerConfig tokenizer;
};

CliConfig parse_cli_config(const std::string& text);
CliConfig load_cli_config(const std::string& path);

}  // namespace layoutgen
