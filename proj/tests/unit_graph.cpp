#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "layoutgen/errors.hpp"
#include "layoutgen/graph.hpp"
#include "test_util.hpp"

using namespace layoutgen;

namespace {

LayoutElement elem(ElementType type, std::array<double, 4> bbox) {
  LayoutElement e;
  e.type = type;
  e.bbox = bbox;
  return e;
}

LayoutDocument doc_of(std::vector<LayoutElement> elements, const std::string& id = "g") {
  LayoutDocument d;
  d.id = id;
  d.elements = std::move(elements);
  return d;
}

// ---- Independent O(n^2) relation oracle -----------------------------------
// Re-derives every edge of the spec'd construction with its own arithmetic;
// kept deliberately separate from build_graph's implementation.

double oracle_gap(const LayoutElement& a, const LayoutElement& b) {
  double gx = 0.0;
  if (b.x0() > a.x1()) gx = b.x0() - a.x1();
  if (a.x0() > b.x1()) gx = a.x0() - b.x1();
  double gy = 0.0;
  if (b.y0() > a.y1()) gy = b.y0() - a.y1();
  if (a.y0() > b.y1()) gy = a.y0() - b.y1();
  return std::hypot(gx, gy);
}

std::vector<Edge> oracle_edges(const LayoutDocument& doc, const GraphConfig& cfg) {
  const auto order = canonical_reading_order(doc);
  const std::size_t n = order.size();
  std::vector<LayoutElement> el(n);
  for (std::size_t i = 0; i < n; ++i) el[i] = doc.elements[order[i]];
  auto off = [&](std::size_t a, std::size_t b) {
    return std::array<double, 2>{el[b].cx() - el[a].cx(), el[b].cy() - el[a].cy()};
  };

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const LayoutElement &a = el[i], &b = el[j];
      const std::pair<RelationKind, double> checks[6] = {
          {RelationKind::kAlignLeft, a.x0() - b.x0()},
          {RelationKind::kAlignRight, a.x1() - b.x1()},
          {RelationKind::kAlignCenterX, (a.x0() + a.x1()) / 2 - (b.x0() + b.x1()) / 2},
          {RelationKind::kAlignTop, a.y0() - b.y0()},
          {RelationKind::kAlignBottom, a.y1() - b.y1()},
          {RelationKind::kAlignCenterY, (a.y0() + a.y1()) / 2 - (b.y0() + b.y1()) / 2},
      };
      for (const auto& [kind, delta] : checks)
        if (std::fabs(delta) <= cfg.tau_align) edges.push_back(Edge{i, j, kind, off(i, j)});
    }
  }

  // k-NN union of accepted proximity candidates.
  std::map<std::pair<std::size_t, std::size_t>, bool> chosen;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && oracle_gap(el[i], el[j]) <= cfg.tau_prox)
        cand.emplace_back(oracle_gap(el[i], el[j]), j);
    std::sort(cand.begin(), cand.end());
    for (std::size_t k = 0; k < cand.size() && k < static_cast<std::size_t>(cfg.k_nn); ++k)
      chosen[{std::min(i, cand[k].second), std::max(i, cand[k].second)}] = true;
  }
  for (const auto& [pair, _] : chosen)
    edges.push_back(
        Edge{pair.first, pair.second, RelationKind::kProximity, off(pair.first, pair.second)});

  for (std::size_t k = 0; k + 1 < n; ++k)
    if (el[k].type == ElementType::kTitle || el[k].type == ElementType::kHeading)
      edges.push_back(Edge{k, k + 1, RelationKind::kHierarchy, off(k, k + 1)});
  for (std::size_t c = 0; c < n; ++c) {
    if (el[c].type != ElementType::kCaption) continue;
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (el[i].type != ElementType::kImage) continue;
      if (best == n || oracle_gap(el[i], el[c]) < oracle_gap(el[best], el[c])) best = i;
    }
    if (best != n && oracle_gap(el[best], el[c]) <= cfg.tau_cap)
      edges.push_back(Edge{best, c, RelationKind::kHierarchy, off(best, c)});
  }

  if (cfg.self_loop)
    for (std::size_t i = 0; i < n; ++i)
      edges.push_back(Edge{i, i, RelationKind::kProximity, {0.0, 0.0}});
  return edges;
}

using EdgeKey = std::tuple<std::size_t, std::size_t, int, double, double>;

std::vector<EdgeKey> edge_multiset(const std::vector<Edge>& edges) {
  std::vector<EdgeKey> keys;
  keys.reserve(edges.size());
  for (const Edge& e : edges)
    keys.emplace_back(e.src, e.dst, static_cast<int>(e.kind), e.offset[0], e.offset[1]);
  std::sort(keys.begin(), keys.end());
  return keys;
}

// ---------------------------------------------------------------------------

bool contains_kind(const std::vector<RelationKind>& kinds, RelationKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

}  // namespace

TEST_CASE("alignment thresholds") {
  GraphConfig cfg;
  LayoutElement a = elem(ElementType::kTextBlock, {0.100, 0.10, 0.50, 0.20});
  LayoutElement b = elem(ElementType::kTextBlock, {0.105, 0.40, 0.60, 0.50});
  CHECK(contains_kind(detect_alignment(a, b, cfg), RelationKind::kAlignLeft));

  LayoutElement c = elem(ElementType::kTextBlock, {0.13, 0.40, 0.60, 0.50});
  CHECK(!contains_kind(detect_alignment(a, c, cfg), RelationKind::kAlignLeft));

  const auto all = detect_alignment(a, a, cfg);
  CHECK(all.size() == 6);
}

TEST_CASE("alignment and proximity are symmetric") {
  GraphConfig cfg;
  num::Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    const LayoutDocument d = testutil::random_document(rng, 2);
    if (d.elements.size() < 2) continue;
    const LayoutElement &a = d.elements[0], &b = d.elements[1];
    CHECK(detect_alignment(a, b, cfg) == detect_alignment(b, a, cfg));
    CHECK(detect_proximity(a, b, cfg) == detect_proximity(b, a, cfg));
  }
}

TEST_CASE("proximity thresholds") {
  GraphConfig cfg;
  LayoutElement a = elem(ElementType::kTextBlock, {0.1, 0.10, 0.9, 0.20});
  CHECK_FALSE(detect_proximity(a, elem(ElementType::kTextBlock, {0.1, 0.35, 0.9, 0.45}), cfg));
  CHECK(detect_proximity(a, elem(ElementType::kTextBlock, {0.1, 0.22, 0.9, 0.32}), cfg));
  CHECK(detect_proximity(a, elem(ElementType::kTextBlock, {0.5, 0.15, 0.95, 0.4}), cfg));  // overlap
}

TEST_CASE("hierarchy rules") {
  GraphConfig cfg;
  // heading at position 0, text at position 1 -> heading -> text edge.
  LayoutDocument d1 = doc_of({elem(ElementType::kHeading, {0.1, 0.1, 0.6, 0.15}),
                              elem(ElementType::kTextBlock, {0.1, 0.2, 0.9, 0.4})});
  const auto order1 = canonical_reading_order(d1);
  const auto h1 = infer_hierarchy(d1, order1, cfg);
  REQUIRE(h1.size() == 1);
  CHECK(h1[0].src == 0);
  CHECK(h1[0].dst == 1);
  CHECK(h1[0].kind == RelationKind::kHierarchy);

  // caption near image -> image -> caption edge.
  LayoutDocument d2 = doc_of({elem(ElementType::kImage, {0.25, 0.40, 0.75, 0.60}),
                              elem(ElementType::kCaption, {0.25, 0.64, 0.75, 0.68})});
  const auto h2 = infer_hierarchy(d2, canonical_reading_order(d2), cfg);
  REQUIRE(h2.size() == 1);
  CHECK(h2[0].src == 0);  // image node
  CHECK(h2[0].dst == 1);

  // caption with no image in range -> no edge.
  LayoutDocument d3 = doc_of({elem(ElementType::kCaption, {0.25, 0.64, 0.75, 0.68})});
  CHECK(infer_hierarchy(d3, canonical_reading_order(d3), cfg).empty());
}

TEST_CASE("build_graph minimal cases") {
  GraphConfig cfg;
  LayoutDocument one = doc_of({elem(ElementType::kTextBlock, {0.1, 0.1, 0.9, 0.3})});
  const LayoutGraph g1 = build_graph(one, cfg);
  CHECK(g1.node_count() == 1);
  REQUIRE(g1.edges.size() == 1);  // just the self-loop
  CHECK(g1.edges[0].src == 0);
  CHECK(g1.edges[0].dst == 0);
  CHECK(g1.edges[0].kind == RelationKind::kProximity);

  GraphConfig no_loop = cfg;
  no_loop.self_loop = false;
  CHECK(build_graph(one, no_loop).edges.empty());

  CHECK_THROWS_AS(build_graph(doc_of({}), cfg), InvalidInputError);
}

TEST_CASE("node features have the documented layout") {
  GraphConfig cfg;
  LayoutDocument d = doc_of({elem(ElementType::kImage, {0.2, 0.1, 0.6, 0.5}),
                             elem(ElementType::kTextBlock, {0.2, 0.6, 0.9, 0.8})});
  d.elements[0].font_size = 0.05;
  const LayoutGraph g = build_graph(d, cfg);
  REQUIRE(g.node_features.rows() == 2);
  REQUIRE(g.node_features.cols() == kNodeFeatureDim);
  // Node 0 is the image (higher on the page): one-hot at index 3.
  CHECK(g.node_features.at(0, 3) == 1.0);
  CHECK(g.node_features.at(0, 8) == 0.2);                    // x0
  CHECK(g.node_features.at(0, 11) == 0.5);                   // y1
  CHECK(g.node_features.at(0, 12) == doctest::Approx(0.4));  // width
  CHECK(g.node_features.at(0, 13) == doctest::Approx(0.4));  // height
  CHECK(g.node_features.at(0, 14) == 0.05);                  // font size
  CHECK(g.node_features.at(0, 15) == 0.0);                   // order fraction 0/(n-1)
  CHECK(g.node_features.at(1, 14) == 0.0);  // absent font size encodes as 0
  CHECK(g.node_features.at(1, 15) == 1.0);
}

TEST_CASE("three-element fixture matches the brute-force oracle") {
  GraphConfig cfg;
  LayoutDocument d = doc_of({elem(ElementType::kHeading, {0.10, 0.10, 0.60, 0.15}),
                             elem(ElementType::kTextBlock, {0.10, 0.18, 0.90, 0.35}),
                             elem(ElementType::kTextBlock, {0.10, 0.38, 0.90, 0.55})});
  const LayoutGraph g = build_graph(d, cfg);
  CHECK(edge_multiset(g.edges) == edge_multiset(oracle_edges(d, cfg)));
  CHECK(check_graph(g).empty());
}

TEST_CASE("random documents match the brute-force oracle") {
  GraphConfig cfg;
  num::Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const LayoutDocument d = testutil::random_document(rng, 8, "o-" + std::to_string(i));
    const LayoutGraph g = build_graph(d, cfg);
    REQUIRE(edge_multiset(g.edges) == edge_multiset(oracle_edges(d, cfg)));
    REQUIRE(check_graph(g).empty());
  }
}

TEST_CASE("permuting elements leaves the canonical graph unchanged") {
  GraphConfig cfg;
  num::Rng rng(55);
  for (int i = 0; i < 60; ++i) {
    const LayoutDocument d = testutil::random_document(rng, 7);
    LayoutDocument shuffled = d;
    for (std::size_t k = shuffled.elements.size(); k > 1; --k)
      std::swap(shuffled.elements[k - 1], shuffled.elements[rng.next_u64() % k]);
    const LayoutGraph a = build_graph(d, cfg);
    const LayoutGraph b = build_graph(shuffled, cfg);
    CHECK(a.node_features == b.node_features);
    CHECK(edge_multiset(a.edges) == edge_multiset(b.edges));
  }
}

TEST_CASE("edge count stays under the sanity bound") {
  GraphConfig cfg;
  num::Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    const LayoutDocument d = testutil::random_document(rng, 8);
    const LayoutGraph g = build_graph(d, cfg);
    const std::size_t n = g.node_count();
    CHECK(g.edges.size() <= n * (6 + static_cast<std::size_t>(cfg.k_nn)) + n + n);
  }
}

TEST_CASE("check_graph flags injected faults") {
  GraphConfig cfg;
  LayoutDocument d = doc_of({elem(ElementType::kTextBlock, {0.1, 0.1, 0.9, 0.3}),
                             elem(ElementType::kTextBlock, {0.1, 0.5, 0.9, 0.7})});
  LayoutGraph g = build_graph(d, cfg);
  CHECK(check_graph(g).empty());

  LayoutGraph bad1 = g;
  bad1.edges.push_back(Edge{0, 2, RelationKind::kProximity, {0, 0}});
  bad1.edge_features = num::Tensor::zeros({bad1.edges.size(), kEdgeFeatureDim});
  auto v1 = check_graph(bad1);
  CHECK(std::find(v1.begin(), v1.end(), "endpoint out of range") != v1.end());

  LayoutGraph bad2 = g;
  bad2.edges.push_back(Edge{1, 0, RelationKind::kAlignLeft, {0, 0}});
  bad2.edge_features = num::Tensor::zeros({bad2.edges.size(), kEdgeFeatureDim});
  auto v2 = check_graph(bad2);
  CHECK(std::find(v2.begin(), v2.end(), "canonical endpoint order") != v2.end());
}

TEST_CASE("debug dump is one JSON object per graph") {
  GraphConfig cfg;
  num::Rng rng(5);
  std::vector<LayoutGraph> graphs;
  graphs.push_back(build_graph(testutil::random_document(rng, 4, "a"), cfg));
  graphs.push_back(build_graph(testutil::random_document(rng, 4, "b"), cfg));
  const std::string text = graphs_to_debug_text(graphs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("\"doc_id\":\"a\"") != std::string::npos);
  const bool has_kind = text.find("align_left") != std::string::npos ||
                        text.find("proximity") != std::string::npos;
  CHECK(has_kind);
}
