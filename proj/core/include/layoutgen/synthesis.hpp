#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/model.hpp"

namespace layoutgen {

enum class RuleId { kR1 = 0, kR2 = 1, kR3 = 2, kR4 = 3 };

std::string_view to_string(RuleId r);

struct ValidationRuleConfig {
  std::set<RuleId> enabled{RuleId::kR1, RuleId::kR2, RuleId::kR3, RuleId::kR4};
  double iou_max = 0.15;
  double tau_cap = 0.10;
};

struct RuleResult {
  RuleId rule;
  bool pass = false;
  std::string detail;
};

struct DocumentReport {
  std::string doc_id;
  std::vector<RuleResult> results;
  bool all_pass() const;
};

struct ValidationReport {
  std::vector<DocumentReport> per_document;
  std::map<RuleId, double> rule_pass_rate;
  double overall_pass_rate = 0.0;
};

enum class ValidationStatus { kUnchecked, kPassed, kFailed };

struct SyntheticLayout {
  LayoutDocument doc;
  std::string checkpoint_id;
  std::uint64_t latent_seed = 0;
  ValidationStatus status = ValidationStatus::kUnchecked;
};

double bbox_iou(const LayoutElement& a, const LayoutElement& b);

// Discretizes a SoftGraph: slots with presence >= 0.5 survive (argmax slot if
// none do), types by row argmax, bboxes as decoded. Relational structure is
// not taken from edge_probs; geometry is re-derived by graph construction when
// a graph is needed.
LayoutDocument harden(const SoftGraph& s, const std::string& id = "synthetic");

std::vector<SyntheticLayout> sample_layouts(const ModelState& ckpt, std::size_t n,
                                            std::uint64_t seed,
                                            const std::string& checkpoint_id = "");

std::vector<RuleResult> validate_layout(const LayoutDocument& doc,
                                        const ValidationRuleConfig& rules);
ValidationReport validate_corpus(const std::vector<LayoutDocument>& docs,
                                 const ValidationRuleConfig& rules);
std::string validation_report_to_text(const ValidationReport& report);

struct RejectionStats {
  std::size_t draws = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0.0;
  std::map<RuleId, std::size_t> rule_failures;
};

// Draws until n_target layouts pass every enabled rule or max_draws is
// exhausted; a shortfall is reported in the stats, not as an error.
std::pair<std::vector<SyntheticLayout>, RejectionStats> rejection_sample(
    const ModelState& ckpt, std::size_t n_target, const ValidationRuleConfig& rules,
    std::uint64_t seed, std::size_t max_draws, const std::string& checkpoint_id = "");

// One rect + one label per element on an 800 x 1035 viewBox.
std::string render_svg(const LayoutDocument& doc);

}  // namespace layoutgen
