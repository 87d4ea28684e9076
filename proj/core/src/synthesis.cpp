#include "layoutgen/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "layoutgen/errors.hpp"
#include "layoutgen/graph.hpp"
#include "layoutgen/io.hpp"

namespace layoutgen {

using nlohmann::ordered_json;

namespace {
constexpr std::array<std::string_view, 4> kRuleNames = {"R1", "R2", "R3", "R4"};
}

std::string_view to_string(RuleId r) { return kRuleNames[static_cast<int>(r)]; }

bool DocumentReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const RuleResult& r) { return r.pass; });
}

double bbox_iou(const LayoutElement& a, const LayoutElement& b) {
  const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = ix * iy;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

LayoutDocument harden(const SoftGraph& s, const std::string& id) {
  const std::size_t n_max = s.presence.numel();
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < n_max; ++k)
    if (s.presence.at(k) >= 0.5) kept.push_back(k);
  if (kept.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n_max; ++k)
      if (s.presence.at(k) > s.presence.at(best)) best = k;
    kept.push_back(best);
  }

  LayoutDocument doc;
  doc.id = id;
  for (std::size_t k : kept) {
    LayoutElement e;
    std::size_t best_type = 0;
    for (std::size_t c = 1; c < 8; ++c)
      if (s.type_probs.at(k, c) > s.type_probs.at(k, best_type)) best_type = c;
    e.type = static_cast<ElementType>(best_type);
    for (std::size_t c = 0; c < 4; ++c) e.bbox[c] = s.bbox.at(k, c);
    doc.elements.push_back(e);
  }
  return doc;
}

std::vector<SyntheticLayout> sample_layouts(const ModelState& ckpt, std::size_t n,
                                            std::uint64_t seed,
                                            const std::string& checkpoint_id) {
  num::Rng rng(seed);
  std::vector<SyntheticLayout> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    num::Tensor z = num::Tensor::zeros({static_cast<std::size_t>(ckpt.cfg.d_latent)});
    for (std::size_t i = 0; i < z.numel(); ++i) z.at(i) = rng.normal();
    const SoftGraph soft = decode_soft(z, ckpt.gen, ckpt.cfg);
    SyntheticLayout layout;
    layout.doc = harden(soft, "synth-" + std::to_string(seed) + "-" + std::to_string(k));
    layout.checkpoint_id = checkpoint_id;
    layout.latent_seed = seed;
    out.push_back(std::move(layout));
  }
  return out;
}

namespace {

RuleResult check_caption_adjacency(const LayoutDocument& doc, const ValidationRuleConfig& rules) {
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (doc.elements[i].type != ElementType::kCaption) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const LayoutElement& e : doc.elements)
      if (e.type == ElementType::kImage) best = std::min(best, bbox_gap_distance(e, doc.elements[i]));
    if (!(best <= rules.tau_cap)) {
      const std::string why = std::isinf(best) ? "no image on the page"
                                               : "nearest image at distance " + format_real(best);
      return {RuleId::kR1, false, "caption (element " + std::to_string(i) + "): " + why};
    }
  }
  return {RuleId::kR1, true, ""};
}

RuleResult check_heading_precedence(const LayoutDocument& doc) {
  const std::vector<std::size_t> order = canonical_reading_order(doc);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ElementType t = doc.elements[order[k]].type;
    if (t != ElementType::kTitle && t != ElementType::kHeading) continue;
    bool found = false;
    for (std::size_t k2 = k + 1; k2 < order.size() && !found; ++k2) {
      const ElementType t2 = doc.elements[order[k2]].type;
      found = t2 == ElementType::kTextBlock || t2 == ElementType::kTable ||
              t2 == ElementType::kImage;
    }
    if (!found)
      return {RuleId::kR2, false,
              std::string(to_string(t)) + " (element " + std::to_string(order[k]) +
                  ") has no following text_block, table or image"};
  }
  return {RuleId::kR2, true, ""};
}

RuleResult check_overlap(const LayoutDocument& doc, const ValidationRuleConfig& rules) {
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    for (std::size_t j = i + 1; j < doc.elements.size(); ++j) {
      const double iou = bbox_iou(doc.elements[i], doc.elements[j]);
      if (iou > rules.iou_max)
        return {RuleId::kR3, false,
                "elements " + std::to_string(i) + " and " + std::to_string(j) + " overlap with IoU " +
                    format_real(iou)};
    }
  }
  return {RuleId::kR3, true, ""};
}

RuleResult check_bounds(const LayoutDocument& doc) {
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    const LayoutElement& e = doc.elements[i];
    const bool ok = e.x0() >= 0.0 && e.x0() < e.x1() && e.x1() <= 1.0 && e.y0() >= 0.0 &&
                    e.y0() < e.y1() && e.y1() <= 1.0;
    if (!ok)
      return {RuleId::kR4, false, "element " + std::to_string(i) + " bbox out of bounds or inverted"};
  }
  return {RuleId::kR4, true, ""};
}

}  // namespace

std::vector<RuleResult> validate_layout(const LayoutDocument& doc,
                                        const ValidationRuleConfig& rules) {
  std::vector<RuleResult> out;
  for (RuleId r : rules.enabled) {
    switch (r) {
      case RuleId::kR1: out.push_back(check_caption_adjacency(doc, rules)); break;
      case RuleId::kR2: out.push_back(check_heading_precedence(doc)); break;
      case RuleId::kR3: out.push_back(check_overlap(doc, rules)); break;
      case RuleId::kR4: out.push_back(check_bounds(doc)); break;
    }
  }
  return out;
}

ValidationReport validate_corpus(const std::vector<LayoutDocument>& docs,
                                 const ValidationRuleConfig& rules) {
  ValidationReport report;
  std::map<RuleId, std::size_t> passes;
  std::size_t overall = 0;
  for (const LayoutDocument& doc : docs) {
    DocumentReport dr;
    dr.doc_id = doc.id;
    dr.results = validate_layout(doc, rules);
    for (const RuleResult& r : dr.results)
      if (r.pass) ++passes[r.rule];
    if (dr.all_pass()) ++overall;
    report.per_document.push_back(std::move(dr));
  }
  const double n = docs.empty() ? 1.0 : static_cast<double>(docs.size());
  for (RuleId r : rules.enabled)
    report.rule_pass_rate[r] = static_cast<double>(passes[r]) / n;
  report.overall_pass_rate = static_cast<double>(overall) / n;
  return report;
}

std::string validation_report_to_text(const ValidationReport& report) {
  ordered_json j;
  j["per_document"] = ordered_json::array();
  for (const DocumentReport& dr : report.per_document) {
    ordered_json item;
    item["id"] = dr.doc_id;
    item["pass"] = dr.all_pass();
    item["results"] = ordered_json::array();
    for (const RuleResult& r : dr.results)
      item["results"].push_back(ordered_json{{"rule", std::string(to_string(r.rule))},
                                             {"pass", r.pass},
                                             {"detail", r.detail}});
    j["per_document"].push_back(std::move(item));
  }
  ordered_json agg;
  ordered_json rates = ordered_json::object();
  for (const auto& [rule, rate] : report.rule_pass_rate)
    rates[std::string(to_string(rule))] = rate;
  agg["rule_pass_rate"] = rates;
  agg["overall_pass_rate"] = report.overall_pass_rate;
  agg["documents"] = report.per_document.size();
  j["aggregate"] = agg;
  return j.dump(2) + "\n";
}

std::pair<std::vector<SyntheticLayout>, RejectionStats> rejection_sample(
    const ModelState& ckpt, std::size_t n_target, const ValidationRuleConfig& rules,
    std::uint64_t seed, std::size_t max_draws, const std::string& checkpoint_id) {
  if (max_draws < n_target)
    throw InvalidInputError("rejection_sample: max_draws must be >= n_target");
  num::Rng rng(seed);
  std::vector<SyntheticLayout> accepted;
  RejectionStats stats;
  for (RuleId r : rules.enabled) stats.rule_failures[r] = 0;
  while (accepted.size() < n_target && stats.draws < max_draws) {
    num::Tensor z = num::Tensor::zeros({static_cast<std::size_t>(ckpt.cfg.d_latent)});
    for (std::size_t i = 0; i < z.numel(); ++i) z.at(i) = rng.normal();
    SyntheticLayout layout;
    layout.doc = harden(decode_soft(z, ckpt.gen, ckpt.cfg),
                        "synth-" + std::to_string(seed) + "-" + std::to_string(stats.draws));
    layout.checkpoint_id = checkpoint_id;
    layout.latent_seed = seed;
    ++stats.draws;
    const std::vector<RuleResult> results = validate_layout(layout.doc, rules);
    bool ok = true;
    for (const RuleResult& r : results) {
      if (!r.pass) {
        ++stats.rule_failures[r.rule];
        ok = false;
      }
    }
    layout.status = ok ? ValidationStatus::kPassed : ValidationStatus::kFailed;
    if (ok) accepted.push_back(std::move(layout));
  }
  stats.accepted = accepted.size();
  stats.acceptance_rate =
      stats.draws > 0 ? static_cast<double>(stats.accepted) / static_cast<double>(stats.draws) : 0.0;
  return {std::move(accepted), stats};
}

namespace {
constexpr std::array<std::string_view, kElementTypeCount> kPalette = {
    "#4e79a7",  // title
    "#f28e2b",  // heading
    "#bab0ac",  // text_block
    "#59a14f",  // image
    "#edc948",  // table
    "#b07aa1",  // caption
    "#76b7b2",  // header
    "#9c755f",  // footer
};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace

std::string render_svg(const LayoutDocument& doc) {
  constexpr double kW = 800.0, kH = 1035.0;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"1035\" "
         "viewBox=\"0 0 800 1035\">\n";
  for (const LayoutElement& e : doc.elements) {
    const double x = e.x0() * kW, y = e.y0() * kH;
    const double w = e.width() * kW, h = e.height() * kH;
    svg += "  <rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\" width=\"" + fmt2(w) +
           "\" height=\"" + fmt2(h) + "\" fill=\"" +
           std::string(kPalette[static_cast<int>(e.type)]) +
           "\" fill-opacity=\"0.55\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg += "  <text x=\"" + fmt2(x + 3.0) + "\" y=\"" + fmt2(y + 12.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#111111\">" +
           std::string(to_string(e.type)) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace layoutgen
