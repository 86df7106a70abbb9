#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneshot/geometry.hpp"
#include "oneshot/segment_map.hpp"

namespace oneshot {

/// Candidate matches as vertices; an edge joins two matches that involve
/// distinct query and map segments and preserve the centroid distance within
/// `epsilon`.
class ConsistencyGraph {
 public:
  ConsistencyGraph() = default;
  ConsistencyGraph(std::size_t n, double epsilon);

  std::size_t size() const { return n_; }
  double epsilon() const { return epsilon_; }
  bool adjacent(std::size_t i, std::size_t j) const { return rows_[i * words_ + j / 64] >> (j % 64) & 1u; }
  /// Symmetric insert; self loops are ignored.
  void add_edge(std::size_t i, std::size_t j);
  std::size_t degree(std::size_t i) const;
  std::size_t edge_count() const;

  /// Packed adjacency row of vertex `i` (bit j set iff edge (i, j)).
  std::span<const std::uint64_t> row(std::size_t i) const { return {rows_.data() + i * words_, words_}; }
  std::size_t words() const { return words_; }

  std::vector<MatchCandidate> vertices;

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  double epsilon_ = 0.0;
  std::vector<std::uint64_t> rows_;
};

ConsistencyGraph build_graph(std::span<const MatchCandidate> candidates, double epsilon);

/// Default node budget for the clique search; beyond it the search gives up.
inline constexpr std::size_t kDefaultCliqueNodeBudget = 5'000'000;

struct CliqueResult {
  /// Sorted vertex ids. Among maximum cliques, the lexicographically smallest.
  std::vector<std::size_t> vertices;
  /// True when the node budget ran out; `vertices` is then empty.
  bool aborted = false;
  std::size_t nodes_expanded = 0;
};

/// Exact maximum clique (branch and bound with greedy-coloring bounds).
CliqueResult max_clique(const ConsistencyGraph& graph, std::size_t node_budget = kDefaultCliqueNodeBudget);

struct Alignment {
  SE3 transform;  // maps query points onto map points
  double rms_residual = 0.0;
};

/// Closed-form least-squares rigid alignment of paired points (first = query,
/// second = map). Throws DegenerateError for fewer than 3 pairs or a
/// collinear query configuration.
Alignment align_centroids(std::span<const std::pair<Point3, Point3>> pairs);
Alignment align_points(std::span<const Point3> query, std::span<const Point3> map);

struct VerificationConfig {
  double epsilon = 0.4;
  std::size_t min_clique_size = 4;
  std::size_t node_budget = kDefaultCliqueNodeBudget;
};

struct PoseEstimate {
  SE3 T_map_query;
  std::vector<MatchCandidate> inliers;
  double rms_residual = 0.0;
  bool accepted = false;
  /// Empty when accepted.
  std::string reason;
};

/// Consistency graph, maximum clique, then alignment of the clique's centroid
/// pairs. Candidates are put in a canonical order first, so the result does
/// not depend on their input order.
PoseEstimate verify(std::span<const MatchCandidate> candidates, const VerificationConfig& cfg);

struct IcpConfig {
  std::size_t max_iter = 30;
  double tol = 1e-4;
  /// Pairs farther apart than this are ignored.
  double max_correspondence_distance = 1.0;
};

struct IcpResult {
  /// Correction applied on top of the initial guess: final = correction * T_init.
  SE3 correction;
  double rms = 0.0;
  std::size_t iterations = 0;
  std::size_t correspondences = 0;
};

/// Point-to-point ICP of `query` (query frame) against `map` (map frame)
/// starting from `T_init`.
IcpResult icp_refine(std::span<const Point3> query, std::span<const Point3> map, const SE3& T_init,
                     const IcpConfig& cfg = {});

}  // namespace oneshot
