#include "layoutgen/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"

namespace layoutgen {

using nlohmann::ordered_json;

namespace {
constexpr std::array<std::string_view, kRelationKindCount> kKindNames = {
    "align_left", "align_right", "align_center_x", "align_top",
    "align_bottom", "align_center_y", "proximity", "hierarchy"};
}

std::string_view to_string(RelationKind k) { return kKindNames[static_cast<int>(k)]; }

std::vector<RelationKind> detect_alignment(const LayoutElement& a, const LayoutElement& b,
                                           const GraphConfig& cfg) {
  std::vector<RelationKind> kinds;
  const double t = cfg.tau_align;
  if (std::abs(a.x0() - b.x0()) <= t) kinds.push_back(RelationKind::kAlignLeft);
  if (std::abs(a.x1() - b.x1()) <= t) kinds.push_back(RelationKind::kAlignRight);
  if (std::abs(a.cx() - b.cx()) <= t) kinds.push_back(RelationKind::kAlignCenterX);
  if (std::abs(a.y0() - b.y0()) <= t) kinds.push_back(RelationKind::kAlignTop);
  if (std::abs(a.y1() - b.y1()) <= t) kinds.push_back(RelationKind::kAlignBottom);
  if (std::abs(a.cy() - b.cy()) <= t) kinds.push_back(RelationKind::kAlignCenterY);
  return kinds;
}

double bbox_gap_distance(const LayoutElement& a, const LayoutElement& b) {
  const double gap_x = std::max(0.0, std::max(a.x0(), b.x0()) - std::min(a.x1(), b.x1()));
  const double gap_y = std::max(0.0, std::max(a.y0(), b.y0()) - std::min(a.y1(), b.y1()));
  return std::sqrt(gap_x * gap_x + gap_y * gap_y);
}

bool detect_proximity(const LayoutElement& a, const LayoutElement& b, const GraphConfig& cfg) {
  return bbox_gap_distance(a, b) <= cfg.tau_prox;
}

namespace {
bool is_heading_like(ElementType t) {
  return t == ElementType::kTitle || t == ElementType::kHeading;
}

std::array<double, 2> center_offset(const LayoutElement& from, const LayoutElement& to) {
  return {to.cx() - from.cx(), to.cy() - from.cy()};
}
}  // namespace

std::vector<Edge> infer_hierarchy(const LayoutDocument& doc,
                                  const std::vector<std::size_t>& order, const GraphConfig& cfg) {
  const std::size_t n = order.size();
  std::vector<Edge> edges;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const LayoutElement& e = doc.elements[order[k]];
    if (!is_heading_like(e.type)) continue;
    const LayoutElement& next = doc.elements[order[k + 1]];
    edges.push_back(Edge{k, k + 1, RelationKind::kHierarchy, center_offset(e, next)});
  }
  for (std::size_t k = 0; k < n; ++k) {
    const LayoutElement& cap = doc.elements[order[k]];
    if (cap.type != ElementType::kCaption) continue;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_node = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (doc.elements[order[j]].type != ElementType::kImage) continue;
      const double d = bbox_gap_distance(doc.elements[order[j]], cap);
      if (d < best) {
        best = d;
        best_node = j;
      }
    }
    if (best_node < n && best <= cfg.tau_cap) {
      const LayoutElement& img = doc.elements[order[best_node]];
      edges.push_back(Edge{best_node, k, RelationKind::kHierarchy, center_offset(img, cap)});
    }
  }
  return edges;
}

LayoutGraph build_graph(const LayoutDocument& doc, const GraphConfig& cfg) {
  if (doc.elements.empty())
    throw InvalidInputError("document \"" + doc.id + "\": cannot build a graph from zero elements");
  validate_document(doc);

  LayoutGraph g;
  g.doc_id = doc.id;
  g.order = canonical_reading_order(doc);
  const std::size_t n = g.order.size();

  std::vector<LayoutElement> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i] = doc.elements[g.order[i]];

  g.node_features = num::Tensor::zeros({n, kNodeFeatureDim});
  for (std::size_t i = 0; i < n; ++i) {
    const LayoutElement& e = nodes[i];
    g.node_features.at(i, static_cast<std::size_t>(e.type)) = 1.0;
    for (std::size_t k = 0; k < 4; ++k) g.node_features.at(i, 8 + k) = e.bbox[k];
    g.node_features.at(i, 12) = e.width();
    g.node_features.at(i, 13) = e.height();
    g.node_features.at(i, 14) = e.font_size.value_or(0.0);
    g.node_features.at(i, 15) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  }

  // Alignment: every pair, one edge per co-occurring kind.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (RelationKind kind : detect_alignment(nodes[i], nodes[j], cfg))
        g.edges.push_back(Edge{i, j, kind, center_offset(nodes[i], nodes[j])});
    }
  }

  // Proximity: union of each node's k_nn nearest accepted candidates.
  std::set<std::pair<std::size_t, std::size_t>> prox_pairs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = bbox_gap_distance(nodes[i], nodes[j]);
      if (d <= cfg.tau_prox) candidates.emplace_back(d, j);
    }
    std::sort(candidates.begin(), candidates.end());
    const std::size_t keep = std::min<std::size_t>(candidates.size(),
                                                   static_cast<std::size_t>(std::max(0, cfg.k_nn)));
    for (std::size_t k = 0; k < keep; ++k) {
      const std::size_t j = candidates[k].second;
      prox_pairs.insert({std::min(i, j), std::max(i, j)});
    }
  }
  for (const auto& [a, b] : prox_pairs)
    g.edges.push_back(Edge{a, b, RelationKind::kProximity, center_offset(nodes[a], nodes[b])});

  for (const Edge& e : infer_hierarchy(doc, g.order, cfg)) g.edges.push_back(e);

  if (cfg.self_loop)
    for (std::size_t i = 0; i < n; ++i)
      g.edges.push_back(Edge{i, i, RelationKind::kProximity, {0.0, 0.0}});

  g.edge_features = num::Tensor::zeros({g.edges.size(), kEdgeFeatureDim});
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const Edge& e = g.edges[k];
    g.edge_features.at(k, static_cast<std::size_t>(e.kind)) = 1.0;
    g.edge_features.at(k, 8) = e.offset[0];
    g.edge_features.at(k, 9) = e.offset[1];
  }
  return g;
}

std::vector<std::string> check_graph(const LayoutGraph& g) {
  std::vector<std::string> violations;
  auto report = [&](const std::string& name) {
    if (std::find(violations.begin(), violations.end(), name) == violations.end())
      violations.push_back(name);
  };

  const std::size_t n = g.order.size();
  if (g.node_features.rank() != 2 || g.node_features.rows() != n ||
      g.node_features.cols() != kNodeFeatureDim)
    report("node feature dimension");
  if (g.edge_features.rank() != 2 || g.edge_features.rows() != g.edges.size() ||
      g.edge_features.cols() != kEdgeFeatureDim)
    report("edge feature dimension");

  std::vector<bool> seen(n, false);
  bool perm_ok = true;
  for (std::size_t idx : g.order) {
    if (idx >= n || seen[idx]) {
      perm_ok = false;
      break;
    }
    seen[idx] = true;
  }
  if (!perm_ok) report("order not a permutation");

  for (const Edge& e : g.edges) {
    if (e.src >= n || e.dst >= n) {
      report("endpoint out of range");
      continue;
    }
    if (e.src == e.dst) {
      if (e.kind != RelationKind::kProximity || e.offset[0] != 0.0 || e.offset[1] != 0.0)
        report("self-loop form");
    } else if (e.kind != RelationKind::kHierarchy && e.src > e.dst) {
      report("canonical endpoint order");
    }
  }
  return violations;
}

std::string graphs_to_debug_text(const std::vector<LayoutGraph>& graphs) {
  std::string out;
  for (const LayoutGraph& g : graphs) {
    ordered_json j;
    j["doc_id"] = g.doc_id;
    ordered_json feats = ordered_json::array();
    for (std::size_t i = 0; i < g.node_features.rows(); ++i) {
      ordered_json row = ordered_json::array();
      for (std::size_t c = 0; c < g.node_features.cols(); ++c) row.push_back(g.node_features.at(i, c));
      feats.push_back(row);
    }
    j["node_features"] = feats;
    ordered_json edges = ordered_json::array();
    for (const Edge& e : g.edges) {
      edges.push_back(ordered_json{{"src", e.src},
                                   {"dst", e.dst},
                                   {"kind", std::string(to_string(e.kind))},
                                   {"offset", e.offset}});
    }
    j["edges"] = edges;
    j["order"] = g.order;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_graph_dump(const std::vector<LayoutGraph>& graphs, const std::string& path) {
  atomic_write_file(path, graphs_to_debug_text(graphs));
}

}  // namespace layoutgen
