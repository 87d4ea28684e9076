#include "layoutgen/layout.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

using nlohmann::ordered_json;

namespace {
constexpr std::array<std::string_view, kElementTypeCount> kTypeNames = {
    "title", "heading", "text_block", "image", "table", "caption", "header", "footer"};

constexpr double kMinExtent = 1e-3;

[[noreturn]] void doc_error(const std::string& id, const std::string& detail) {
  throw InvalidInputError("document \"" + id + "\": " + detail);
}
}  // namespace

std::string_view to_string(ElementType t) { return kTypeNames[static_cast<int>(t)]; }

std::optional<ElementType> parse_element_type(std::string_view name) {
  for (int i = 0; i < kElementTypeCount; ++i)
    if (kTypeNames[i] == name) return static_cast<ElementType>(i);
  return std::nullopt;
}

void validate_document(const LayoutDocument& doc) {
  if (doc.page_width <= 0.0 || doc.page_height <= 0.0)
    doc_error(doc.id, "page dimensions must be positive");
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    const LayoutElement& e = doc.elements[i];
    const std::string at = "element " + std::to_string(i) + ": ";
    for (double c : e.bbox)
      if (!std::isfinite(c)) doc_error(doc.id, at + "bbox has non-finite coordinate");
    if (!(e.x0() >= 0.0 && e.x0() < e.x1() && e.x1() <= 1.0)) {
      if (e.x0() >= e.x1()) doc_error(doc.id, at + "x0 >= x1");
      doc_error(doc.id, at + "bbox x out of [0,1]");
    }
    if (!(e.y0() >= 0.0 && e.y0() < e.y1() && e.y1() <= 1.0)) {
      if (e.y0() >= e.y1()) doc_error(doc.id, at + "y0 >= y1");
      doc_error(doc.id, at + "bbox y out of [0,1]");
    }
    if (e.font_size && !(*e.font_size > 0.0 && *e.font_size <= 1.0))
      doc_error(doc.id, at + "font_size must be in (0,1]");
    if (e.order && *e.order < 0) doc_error(doc.id, at + "order must be non-negative");
  }
  const std::size_t with_order =
      static_cast<std::size_t>(std::count_if(doc.elements.begin(), doc.elements.end(),
                                             [](const LayoutElement& e) { return e.order.has_value(); }));
  if (with_order != 0) {
    if (with_order != doc.elements.size())
      doc_error(doc.id, "order: either all elements carry an explicit order or none do");
    std::vector<int> orders;
    orders.reserve(doc.elements.size());
    for (const auto& e : doc.elements) orders.push_back(*e.order);
    std::sort(orders.begin(), orders.end());
    for (std::size_t i = 0; i < orders.size(); ++i)
      if (orders[i] != static_cast<int>(i))
        doc_error(doc.id, "order: values are not a permutation of 0..n-1");
  }
}

namespace {

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw InvalidInputError(where + ": unknown key \"" + key + "\"");
  }
}

LayoutDocument doc_from_json(const ordered_json& j) {
  if (!j.is_object()) throw InvalidInputError("document is not a JSON object");
  reject_unknown_keys(j, {"id", "label", "page", "elements"}, "document");
  if (!j.contains("id") || !j["id"].is_string())
    throw InvalidInputError("document: missing or non-string \"id\"");
  LayoutDocument doc;
  doc.id = j["id"].get<std::string>();
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string()) doc_error(doc.id, "label must be a string or null");
    doc.label = j["label"].get<std::string>();
  }
  if (!j.contains("page") || !j["page"].is_object()) doc_error(doc.id, "missing \"page\" object");
  const auto& page = j["page"];
  reject_unknown_keys(page, {"width", "height"}, "document \"" + doc.id + "\" page");
  if (!page.contains("width") || !page["width"].is_number() || !page.contains("height") ||
      !page["height"].is_number())
    doc_error(doc.id, "page width/height must be numbers");
  doc.page_width = page["width"].get<double>();
  doc.page_height = page["height"].get<double>();
  if (!j.contains("elements") || !j["elements"].is_array())
    doc_error(doc.id, "missing \"elements\" array");
  for (std::size_t i = 0; i < j["elements"].size(); ++i) {
    const auto& je = j["elements"][i];
    const std::string at = "element " + std::to_string(i) + ": ";
    if (!je.is_object()) doc_error(doc.id, at + "not an object");
    reject_unknown_keys(je, {"type", "bbox", "font_size", "order"},
                        "document \"" + doc.id + "\" element " + std::to_string(i));
    LayoutElement e;
    if (!je.contains("type") || !je["type"].is_string())
      doc_error(doc.id, at + "missing or non-string \"type\"");
    const auto type = parse_element_type(je["type"].get<std::string>());
    if (!type) doc_error(doc.id, at + "unknown type name \"" + je["type"].get<std::string>() + "\"");
    e.type = *type;
    if (!je.contains("bbox") || !je["bbox"].is_array() || je["bbox"].size() != 4)
      doc_error(doc.id, at + "bbox must be an array of 4 numbers");
    for (int k = 0; k < 4; ++k) {
      if (!je["bbox"][k].is_number()) doc_error(doc.id, at + "bbox must be an array of 4 numbers");
      e.bbox[static_cast<std::size_t>(k)] = je["bbox"][k].get<double>();
    }
    if (je.contains("font_size") && !je["font_size"].is_null()) {
      if (!je["font_size"].is_number()) doc_error(doc.id, at + "font_size must be a number or null");
      e.font_size = je["font_size"].get<double>();
    }
    if (je.contains("order") && !je["order"].is_null()) {
      if (!je["order"].is_number_integer())
        doc_error(doc.id, at + "order must be an integer or null");
      e.order = je["order"].get<int>();
    }
    doc.elements.push_back(e);
  }
  validate_document(doc);
  return doc;
}

ordered_json doc_to_json(const LayoutDocument& doc) {
  ordered_json j;
  j["id"] = doc.id;
  if (doc.label)
    j["label"] = *doc.label;
  else
    j["label"] = nullptr;
  j["page"] = ordered_json{{"width", doc.page_width}, {"height", doc.page_height}};
  j["elements"] = ordered_json::array();
  for (const auto& e : doc.elements) {
    ordered_json je;
    je["type"] = std::string(to_string(e.type));
    je["bbox"] = e.bbox;
    if (e.font_size)
      je["font_size"] = *e.font_size;
    else
      je["font_size"] = nullptr;
    if (e.order)
      je["order"] = *e.order;
    else
      je["order"] = nullptr;
    j["elements"].push_back(je);
  }
  return j;
}

}  // namespace

std::vector<LayoutDocument> parse_corpus_text(const std::string& text) {
  std::vector<LayoutDocument> docs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    try {
      docs.push_back(doc_from_json(j));
    } catch (const InvalidInputError& e) {
      throw InvalidInputError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<LayoutDocument> parse_corpus(const std::string& path) {
  return parse_corpus_text(read_file(path));
}

std::string corpus_to_text(const std::vector<LayoutDocument>& docs) {
  std::string out;
  for (const auto& doc : docs) {
    validate_document(doc);
    out += doc_to_json(doc).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::vector<LayoutDocument>& docs, const std::string& path) {
  atomic_write_file(path, corpus_to_text(docs));
}

std::vector<std::size_t> canonical_reading_order(const LayoutDocument& doc) {
  const std::size_t n = doc.elements.size();
  std::vector<std::size_t> result(n);
  if (n == 0) return result;

  if (doc.elements[0].order.has_value()) {
    for (std::size_t i = 0; i < n; ++i)
      result[static_cast<std::size_t>(*doc.elements[i].order)] = i;
    return result;
  }

  std::vector<std::size_t> by_cy(n);
  for (std::size_t i = 0; i < n; ++i) by_cy[i] = i;
  std::stable_sort(by_cy.begin(), by_cy.end(), [&](std::size_t a, std::size_t b) {
    return doc.elements[a].cy() < doc.elements[b].cy();
  });

  std::vector<std::vector<std::size_t>> rows;
  double row_sum = 0.0;
  for (std::size_t idx : by_cy) {
    const double cy = doc.elements[idx].cy();
    if (!rows.empty() &&
        cy - row_sum / static_cast<double>(rows.back().size()) <= kRowTolerance) {
      rows.back().push_back(idx);
      row_sum += cy;
    } else {
      rows.push_back({idx});
      row_sum = cy;
    }
  }

  std::size_t pos = 0;
  for (auto& row : rows) {
    std::sort(row.begin(), row.end(), [&](std::size_t a, std::size_t b) {
      const double xa = doc.elements[a].x0(), xb = doc.elements[b].x0();
      if (xa != xb) return xa < xb;
      return a < b;
    });
    for (std::size_t idx : row) result[pos++] = idx;
  }
  return result;
}

std::array<double, 4> clamp_bbox(std::array<double, 4> bbox) {
  for (double& c : bbox) c = std::min(1.0, std::max(0.0, c));
  for (int axis = 0; axis < 2; ++axis) {
    double lo = std::min(bbox[axis], bbox[axis + 2]);
    double hi = std::max(bbox[axis], bbox[axis + 2]);
    if (hi - lo < kMinExtent) {
      hi = std::min(1.0, lo + kMinExtent);
      lo = hi - kMinExtent;
    }
    bbox[axis] = lo;
    bbox[axis + 2] = hi;
  }
  return bbox;
}

namespace {
LayoutElement make_element(ElementType type, std::array<double, 4> bbox,
                           std::optional<double> font_size = std::nullopt) {
  LayoutElement e;
  e.type = type;
  e.bbox = bbox;
  e.font_size = font_size;
  return e;
}
}  // namespace

std::vector<std::pair<std::string, LayoutDocument>> default_toy_templates() {
  using ET = ElementType;
  std::vector<std::pair<std::string, LayoutDocument>> out;

  LayoutDocument letter;
  letter.id = "letter-template";
  letter.elements = {
      make_element(ET::kHeader, {0.05, 0.02, 0.95, 0.08}, 0.015),
      make_element(ET::kTitle, {0.15, 0.12, 0.85, 0.18}, 0.035),
      make_element(ET::kTextBlock, {0.08, 0.22, 0.92, 0.40}, 0.018),
      make_element(ET::kTextBlock, {0.08, 0.44, 0.92, 0.62}, 0.018),
      make_element(ET::kTextBlock, {0.08, 0.66, 0.92, 0.84}, 0.018),
      make_element(ET::kFooter, {0.05, 0.92, 0.95, 0.97}, 0.012),
  };
  out.emplace_back("letter", letter);

  LayoutDocument invoice;
  invoice.id = "invoice-template";
  invoice.elements = {
      make_element(ET::kHeader, {0.05, 0.02, 0.95, 0.10}, 0.02),
      make_element(ET::kTable, {0.08, 0.15, 0.92, 0.38}),
      make_element(ET::kTextBlock, {0.08, 0.42, 0.92, 0.52}, 0.016),
      make_element(ET::kTable, {0.08, 0.56, 0.92, 0.82}),
      make_element(ET::kFooter, {0.05, 0.90, 0.95, 0.96}, 0.012),
  };
  out.emplace_back("invoice", invoice);

  LayoutDocument report;
  report.id = "report-template";
  report.elements = {
      make_element(ET::kTitle, {0.15, 0.04, 0.85, 0.10}, 0.04),
      make_element(ET::kHeading, {0.08, 0.14, 0.60, 0.18}, 0.025),
      make_element(ET::kTextBlock, {0.08, 0.22, 0.92, 0.38}, 0.018),
      make_element(ET::kImage, {0.25, 0.42, 0.75, 0.60}),
      make_element(ET::kCaption, {0.25, 0.62, 0.75, 0.66}, 0.014),
      make_element(ET::kHeading, {0.08, 0.70, 0.60, 0.74}, 0.025),
      make_element(ET::kTextBlock, {0.08, 0.78, 0.92, 0.94}, 0.018),
  };
  out.emplace_back("report", report);

  return out;
}

std::vector<LayoutDocument> generate_toy_corpus(const ToyCorpusSpec& spec) {
  if (spec.per_class < 1) throw InvalidInputError("toy corpus: per_class must be >= 1");
  if (spec.jitter < 0.0) throw InvalidInputError("toy corpus: jitter must be >= 0");
  if (spec.classes.empty()) throw InvalidInputError("toy corpus: no class templates");
  for (const auto& [name, tmpl] : spec.classes) validate_document(tmpl);

  num::Rng rng(spec.seed);
  std::vector<LayoutDocument> docs;
  docs.reserve(spec.classes.size() * static_cast<std::size_t>(spec.per_class));
  for (const auto& [name, tmpl] : spec.classes) {
    for (int k = 0; k < spec.per_class; ++k) {
      LayoutDocument doc = tmpl;
      doc.id = name + "-" + std::to_string(k);
      doc.label = name;
      for (auto& e : doc.elements) {
        for (double& c : e.bbox) c += rng.uniform(-spec.jitter, spec.jitter);
        e.bbox = clamp_bbox(e.bbox);
      }
      docs.push_back(std::move(doc));
    }
  }
  return docs;
}

}  // namespace layoutgen
