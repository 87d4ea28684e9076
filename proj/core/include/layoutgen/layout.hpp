#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace layoutgen {

// Element vocabulary. Indices are load-bearing: serialization uses the names,
// feature vectors use the index.
enum class ElementType : int {
  kTitle = 0,
  kHeading = 1,
  kTextBlock = 2,
  kImage = 3,
  kTable = 4,
  kCaption = 5,
  kHeader = 6,
  kFooter = 7,
};

inline constexpr int kElementTypeCount = 8;

std::string_view to_string(ElementType t);
std::optional<ElementType> parse_element_type(std::string_view name);

// One page element. Coordinates are page-normalized to [0,1], origin top-left;
// font_size is page-height-normalized.
struct LayoutElement {
  ElementType type = ElementType::kTextBlock;
  std::array<double, 4> bbox{0.0, 0.0, 1.0, 1.0};  // x0, y0, x1, y1
  std::optional<double> font_size;
  std::optional<int> order;

  double x0() const { return bbox[0]; }
  double y0() const { return bbox[1]; }
  double x1() const { return bbox[2]; }
  double y1() const { return bbox[3]; }
  double cx() const { return 0.5 * (bbox[0] + bbox[2]); }
  double cy() const { return 0.5 * (bbox[1] + bbox[3]); }
  double width() const { return bbox[2] - bbox[0]; }
  double height() const { return bbox[3] - bbox[1]; }

  friend bool operator==(const LayoutElement&, const LayoutElement&) = default;
};

struct LayoutDocument {
  std::string id;
  std::optional<std::string> label;
  double page_width = 800.0;
  double page_height = 1035.0;
  std::vector<LayoutElement> elements;

  friend bool operator==(const LayoutDocument&, const LayoutDocument&) = default;
};

// Throws InvalidInputError naming the document id and offending field.
void validate_document(const LayoutDocument& doc);

// JSON Lines corpus, one document per line. parse_corpus rejects malformed
// lines (with the line number), unknown keys, and invariant violations.
std::vector<LayoutDocument> parse_corpus(const std::string& path);
void write_corpus(const std::vector<LayoutDocument>& docs, const std::string& path);
std::vector<LayoutDocument> parse_corpus_text(const std::string& text);
std::string corpus_to_text(const std::vector<LayoutDocument>& docs);

// Explicit orders win; otherwise row-major order: elements whose vertical
// centers sit within kRowTolerance of the running row mean share a row, rows
// go top to bottom, and within a row elements go left to right (ties keep the
// original list order). Returns a permutation of 0..n-1 mapping reading-order
// position to element index.
inline constexpr double kRowTolerance = 0.02;
std::vector<std::size_t> canonical_reading_order(const LayoutDocument& doc);

struct ToyCorpusSpec {
  std::vector<std::pair<std::string, LayoutDocument>> classes;  // (class name, template)
  int per_class = 100;
  double jitter = 0.02;
  std::uint64_t seed = 7;
};

// The three built-in class templates ("letter", "invoice", "report"). All of
// them pass the full validation rule suite unjittered.
std::vector<std::pair<std::string, LayoutDocument>> default_toy_templates();

// Deterministic jittered corpus: each bbox coordinate gets uniform noise in
// [-jitter, +jitter] and is then clamped so the box invariants survive.
std::vector<LayoutDocument> generate_toy_corpus(const ToyCorpusSpec& spec);

// Shared clamp used by the toy generator and the jitter baseline: keeps
// 0 <= x0 < x1 <= 1 with a minimum extent of 1e-3 per axis.
std::array<double, 4> clamp_bbox(std::array<double, 4> bbox);

}  // namespace layoutgen
