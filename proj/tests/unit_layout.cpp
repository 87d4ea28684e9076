#include <doctest.h>

#include <algorithm>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/layout.hpp"
#include "test_util.hpp"

using namespace layoutgen;

namespace {
LayoutDocument simple_doc(const std::string& id, std::vector<LayoutElement> elements) {
  LayoutDocument doc;
  doc.id = id;
  doc.elements = std::move(elements);
  return doc;
}

LayoutElement elem(ElementType type, std::array<double, 4> bbox) {
  LayoutElement e;
  e.type = type;
  e.bbox = bbox;
  return e;
}
}  // namespace

TEST_CASE("element type names round-trip with stable indices") {
  CHECK(to_string(ElementType::kTitle) == "title");
  CHECK(to_string(ElementType::kFooter) == "footer");
  for (int i = 0; i < kElementTypeCount; ++i) {
    const auto t = static_cast<ElementType>(i);
    CHECK(parse_element_type(to_string(t)) == t);
  }
  CHECK(!parse_element_type("figure"));
}

TEST_CASE("parse single valid line") {
  const std::string line =
      R"({"id": "d1", "label": null, "page": {"width": 612, "height": 792}, )"
      R"("elements": [{"type": "text_block", "bbox": [0.1, 0.2, 0.9, 0.4], "font_size": null, "order": null}]})"
      "\n";
  const auto docs = parse_corpus_text(line);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].id == "d1");
  CHECK(!docs[0].label);
  CHECK(docs[0].page_width == 612.0);
  REQUIRE(docs[0].elements.size() == 1);
  CHECK(docs[0].elements[0].type == ElementType::kTextBlock);
  CHECK(docs[0].elements[0].bbox == std::array<double, 4>{0.1, 0.2, 0.9, 0.4});
}

TEST_CASE("parse rejects inverted bbox naming the document and field") {
  const std::string line =
      R"({"id": "bad-doc", "label": null, "page": {"width": 1, "height": 1}, )"
      R"("elements": [{"type": "text_block", "bbox": [0.5, 0.1, 0.4, 0.2]}]})";
  try {
    parse_corpus_text(line);
    FAIL("expected InvalidInputError");
  } catch (const InvalidInputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad-doc") != std::string::npos);
    CHECK(msg.find("x0 >= x1") != std::string::npos);
  }
}

TEST_CASE("parse error cases") {
  CHECK(parse_corpus_text("").empty());  // empty file -> empty corpus
  CHECK_THROWS_WITH_AS(parse_corpus_text("{not json"), doctest::Contains("line 1"),
                       InvalidInputError);
  CHECK_THROWS_WITH_AS(
      parse_corpus_text(R"({"id": "x", "page": {"width": 1, "height": 1}, "elements": [], "extra": 1})"),
      doctest::Contains("unknown key \"extra\""), InvalidInputError);
  CHECK_THROWS_WITH_AS(
      parse_corpus_text(
          R"({"id": "x", "page": {"width": 1, "height": 1}, "elements": [{"type": "figure", "bbox": [0,0,1,1]}]})"),
      doctest::Contains("unknown type name"), InvalidInputError);
  // Orders must be all-present and a permutation.
  CHECK_THROWS_WITH_AS(
      parse_corpus_text(
          R"({"id": "x", "page": {"width": 1, "height": 1}, "elements": [)"
          R"({"type": "title", "bbox": [0,0,0.5,0.1], "order": 0}, {"type": "footer", "bbox": [0,0.9,1,1]}]})"),
      doctest::Contains("order"), InvalidInputError);
  CHECK_THROWS_WITH_AS(
      parse_corpus_text(
          R"({"id": "x", "page": {"width": 1, "height": 1}, "elements": [)"
          R"({"type": "title", "bbox": [0,0,0.5,0.1], "order": 1}, {"type": "footer", "bbox": [0,0.9,1,1], "order": 1}]})"),
      doctest::Contains("permutation"), InvalidInputError);
}

TEST_CASE("write/parse round-trip preserves fields exactly") {
  LayoutDocument doc = simple_doc("rt", {elem(ElementType::kTitle, {0.1, 0.05, 0.9, 0.12}),
                                         elem(ElementType::kTextBlock, {0.1, 0.2, 0.9, 0.5}),
                                         elem(ElementType::kFooter, {0.05, 0.9, 0.95, 0.97})});
  doc.label = "letter";
  doc.elements[0].font_size = 0.04;  // others stay absent
  const auto parsed = parse_corpus_text(corpus_to_text({doc}));
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0] == doc);
  CHECK(!parsed[0].elements[1].font_size);  // null font_size stays absent

  CHECK(corpus_to_text({}).empty());
  CHECK(parse_corpus_text(corpus_to_text({})).empty());
}

TEST_CASE("round-trip identity over random documents") {
  num::Rng rng(17);
  std::vector<LayoutDocument> docs;
  for (int i = 0; i < 200; ++i)
    docs.push_back(testutil::random_document(rng, 8, "rnd-" + std::to_string(i)));
  const auto parsed = parse_corpus_text(corpus_to_text(docs));
  REQUIRE(parsed.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) CHECK(parsed[i] == docs[i]);
}

TEST_CASE("file round-trip via write_corpus/parse_corpus") {
  testutil::TempDir dir("layout");
  num::Rng rng(4);
  std::vector<LayoutDocument> docs;
  for (int i = 0; i < 10; ++i)
    docs.push_back(testutil::random_document(rng, 6, "f-" + std::to_string(i)));
  const std::string path = dir.file("corpus.jsonl");
  write_corpus(docs, path);
  CHECK(parse_corpus(path) == docs);
  CHECK_THROWS_AS(parse_corpus(dir.file("missing.jsonl")), InvalidInputError);
}

TEST_CASE("reading order: vertical, row grouping, ties") {
  // Clear vertical order.
  LayoutDocument v = simple_doc("v", {elem(ElementType::kTextBlock, {0.1, 0.10, 0.9, 0.14}),
                                      elem(ElementType::kTextBlock, {0.1, 0.50, 0.9, 0.54})});
  CHECK(canonical_reading_order(v) == std::vector<std::size_t>{0, 1});

  // Same row, left first: A(cy 0.30, x0 0.6), B(cy 0.31, x0 0.1) -> [B, A].
  LayoutDocument row = simple_doc("row", {elem(ElementType::kTextBlock, {0.6, 0.28, 0.9, 0.32}),
                                          elem(ElementType::kTextBlock, {0.1, 0.29, 0.4, 0.33})});
  CHECK(canonical_reading_order(row) == std::vector<std::size_t>{1, 0});

  // Identical boxes tie-break by input index.
  LayoutDocument tie = simple_doc("tie", {elem(ElementType::kTextBlock, {0.1, 0.1, 0.5, 0.2}),
                                          elem(ElementType::kTextBlock, {0.1, 0.1, 0.5, 0.2})});
  CHECK(canonical_reading_order(tie) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("explicit orders win") {
  LayoutDocument doc = simple_doc("exp", {elem(ElementType::kTextBlock, {0.1, 0.1, 0.5, 0.2}),
                                          elem(ElementType::kTitle, {0.1, 0.5, 0.5, 0.6})});
  doc.elements[0].order = 1;
  doc.elements[1].order = 0;
  CHECK(canonical_reading_order(doc) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("reading order is a permutation and idempotent") {
  num::Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const LayoutDocument doc = testutil::random_document(rng);
    const auto order = canonical_reading_order(doc);
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) CHECK(sorted[k] == k);

    LayoutDocument reordered = doc;
    for (std::size_t k = 0; k < order.size(); ++k) reordered.elements[k] = doc.elements[order[k]];
    const auto order2 = canonical_reading_order(reordered);
    for (std::size_t k = 0; k < order2.size(); ++k) CHECK(order2[k] == k);
  }
}

TEST_CASE("toy corpus: determinism, zero jitter, counting") {
  ToyCorpusSpec spec;
  spec.classes = default_toy_templates();
  spec.per_class = 100;
  spec.jitter = 0.02;
  spec.seed = 7;
  const auto a = generate_toy_corpus(spec);
  const auto b = generate_toy_corpus(spec);
  CHECK(corpus_to_text(a) == corpus_to_text(b));  // byte-identical

  CHECK(a.size() == 300);
  std::size_t letters = 0;
  for (const auto& d : a)
    if (d.label == "letter") ++letters;
  CHECK(letters == 100);

  ToyCorpusSpec zero = spec;
  zero.jitter = 0.0;
  const auto exact = generate_toy_corpus(zero);
  for (std::size_t c = 0; c < 3; ++c) {
    for (int k = 0; k < zero.per_class; ++k) {
      const auto& doc = exact[c * 100 + static_cast<std::size_t>(k)];
      REQUIRE(doc.elements.size() == spec.classes[c].second.elements.size());
      for (std::size_t e = 0; e < doc.elements.size(); ++e)
        CHECK(doc.elements[e].bbox == spec.classes[c].second.elements[e].bbox);
    }
  }
}

TEST_CASE("toy corpus survives absurd jitter via clamping") {
  ToyCorpusSpec spec;
  spec.classes = default_toy_templates();
  spec.per_class = 20;
  spec.jitter = 5.0;
  spec.seed = 99;
  for (const auto& doc : generate_toy_corpus(spec)) CHECK_NOTHROW(validate_document(doc));
}

TEST_CASE("toy corpus rejects bad specs") {
  ToyCorpusSpec spec;
  spec.classes = default_toy_templates();
  spec.per_class = 0;
  CHECK_THROWS_AS(generate_toy_corpus(spec), InvalidInputError);
}
