#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/tensor.hpp"

namespace layoutgen {

// Relation vocabulary for edges. hierarchy is the only directed kind.
enum class RelationKind : int {
  kAlignLeft = 0,
  kAlignRight = 1,
  kAlignCenterX = 2,
  kAlignTop = 3,
  kAlignBottom = 4,
  kAlignCenterY = 5,
  kProximity = 6,
  kHierarchy = 7,
};

inline constexpr int kRelationKindCount = 8;

std::string_view to_string(RelationKind k);

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  RelationKind kind = RelationKind::kProximity;
  std::array<double, 2> offset{0.0, 0.0};  // center(dst) - center(src)

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct GraphConfig {
  double tau_align = 0.01;
  double tau_prox = 0.05;
  int k_nn = 4;
  double tau_cap = 0.10;
  bool self_loop = true;
};

inline constexpr std::size_t kNodeFeatureDim = 16;  // 8 type + 4 bbox + 2 size + font + order frac
inline constexpr std::size_t kEdgeFeatureDim = 10;  // 8 kind one-hot + 2 offset

// Nodes are indexed by canonical reading order; `order[i]` maps node i back to
// the document's element list.
struct LayoutGraph {
  std::string doc_id;
  num::Tensor node_features;  // [n x 16]
  std::vector<Edge> edges;
  num::Tensor edge_features;  // [m x 10], row k describes edges[k]
  std::vector<std::size_t> order;

  std::size_t node_count() const { return order.size(); }
};

// Alignment kinds that hold between a and b under cfg.tau_align. Symmetric;
// multiple kinds may co-occur. Returned sorted by kind index.
std::vector<RelationKind> detect_alignment(const LayoutElement& a, const LayoutElement& b,
                                           const GraphConfig& cfg);

// Bbox gap distance: sqrt(gap_x^2 + gap_y^2) with per-axis gaps clamped at 0.
double bbox_gap_distance(const LayoutElement& a, const LayoutElement& b);

bool detect_proximity(const LayoutElement& a, const LayoutElement& b, const GraphConfig& cfg);

// Directed semantic edges over canonical node indices:
//  - title/heading at reading position k -> its successor at k+1;
//  - nearest image -> caption when their gap distance is within cfg.tau_cap.
std::vector<Edge> infer_hierarchy(const LayoutDocument& doc,
                                  const std::vector<std::size_t>& order, const GraphConfig& cfg);

LayoutGraph build_graph(const LayoutDocument& doc, const GraphConfig& cfg);

// Structural invariant check; returns violated invariant names (empty = ok).
std::vector<std::string> check_graph(const LayoutGraph& g);

// Debug dump: JSON Lines, one graph per line.
std::string graphs_to_debug_text(const std::vector<LayoutGraph>& graphs);
void write_graph_dump(const std::vector<LayoutGraph>& graphs, const std::string& path);

}  // namespace layoutgen
