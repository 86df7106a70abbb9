#include "oneshot/verification.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <tuple>

#include <Eigen/SVD>

#include "oneshot/error.hpp"

namespace oneshot {

ConsistencyGraph::ConsistencyGraph(std::size_t n, double epsilon)
    : n_(n), words_((n + 63) / 64), epsilon_(epsilon), rows_(n * ((n + 63) / 64), 0) {}

void ConsistencyGraph::add_edge(std::size_t i, std::size_t j) {
  if (i == j) return;
  rows_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64);
  rows_[j * words_ + i / 64] |= std::uint64_t{1} << (i % 64);
}

std::size_t ConsistencyGraph::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::uint64_t w : row(i)) d += static_cast<std::size_t>(std::popcount(w));
  return d;
}

std::size_t ConsistencyGraph::edge_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < n_; ++i) total += degree(i);
  return total / 2;
}

ConsistencyGraph build_graph(std::span<const MatchCandidate> candidates, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("consistency epsilon must be positive");
  ConsistencyGraph g(candidates.size(), epsilon);
  g.vertices.assign(candidates.begin(), candidates.end());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const MatchCandidate& a = candidates[i];
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      const MatchCandidate& b = candidates[j];
      if (a.query_segment_id == b.query_segment_id || a.map_segment_id == b.map_segment_id) continue;
      const double dq = (a.query_centroid - b.query_centroid).norm();
      const double dm = (a.map_centroid - b.map_centroid).norm();
      if (std::abs(dq - dm) <= epsilon) g.add_edge(i, j);
    }
  }
  return g;
}

namespace {

using Bits = std::vector<std::uint64_t>;

bool any(const Bits& b) {
  return std::any_of(b.begin(), b.end(), [](std::uint64_t w) { return w != 0; });
}

std::size_t first_bit(const Bits& b) {
  for (std::size_t w = 0; w < b.size(); ++w) {
    if (b[w]) return w * 64 + static_cast<std::size_t>(std::countr_zero(b[w]));
  }
  return b.size() * 64;
}

void clear_bit(Bits& b, std::size_t i) { b[i / 64] &= ~(std::uint64_t{1} << (i % 64)); }
bool test_bit(const Bits& b, std::size_t i) { return b[i / 64] >> (i % 64) & 1u; }

struct BudgetExceeded {};

// Branch and bound over candidate sets with greedy sequential coloring as the
// upper bound.
class CliqueSearcher {
 public:
  CliqueSearcher(const ConsistencyGraph& g, std::size_t budget) : g_(g), budget_(budget) {}

  // Largest clique inside `candidates` if it is larger than `floor`,
  // otherwise an empty vector. With `first_only` the search stops as soon as
  // any clique larger than `floor` is seen.
  std::vector<std::size_t> run(const Bits& candidates, std::size_t floor, bool first_only) {
    best_.clear();
    best_size_ = floor;
    first_only_ = first_only;
    done_ = false;
    current_.clear();
    expand(candidates);
    return best_;
  }

  std::size_t nodes() const { return nodes_; }

 private:
  void expand(Bits p) {
    if (++nodes_ > budget_) throw BudgetExceeded{};
    std::vector<std::size_t> order;
    std::vector<std::size_t> bound;
    color(p, order, bound);
    for (std::size_t k = order.size(); k-- > 0;) {
      if (current_.size() + bound[k] <= best_size_) return;
      const std::size_t v = order[k];
      current_.push_back(v);
      Bits next(p.size());
      const auto row = g_.row(v);
      for (std::size_t w = 0; w < p.size(); ++w) next[w] = p[w] & row[w];
      if (!any(next)) {
        if (current_.size() > best_size_) {
          best_size_ = current_.size();
          best_ = current_;
          if (first_only_) done_ = true;
        }
      } else {
        expand(std::move(next));
      }
      current_.pop_back();
      if (done_) return;
      clear_bit(p, v);
    }
  }

  void color(const Bits& p, std::vector<std::size_t>& order, std::vector<std::size_t>& bound) const {
    Bits uncolored = p;
    std::size_t c = 0;
    while (any(uncolored)) {
      ++c;
      Bits available = uncolored;
      while (any(available)) {
        const std::size_t v = first_bit(available);
        clear_bit(available, v);
        clear_bit(uncolored, v);
        const auto row = g_.row(v);
        for (std::size_t w = 0; w < available.size(); ++w) available[w] &= ~row[w];
        order.push_back(v);
        bound.push_back(c);
      }
    }
  }

  const ConsistencyGraph& g_;
  std::size_t budget_;
  std::size_t nodes_ = 0;
  std::vector<std::size_t> current_;
  std::vector<std::size_t> best_;
  std::size_t best_size_ = 0;
  bool first_only_ = false;
  bool done_ = false;
};

}  // namespace

CliqueResult max_clique(const ConsistencyGraph& graph, std::size_t node_budget) {
  CliqueResult result;
  const std::size_t n = graph.size();
  if (n == 0) return result;
  Bits all(graph.words(), 0);
  for (std::size_t i = 0; i < n; ++i) all[i / 64] |= std::uint64_t{1} << (i % 64);

  CliqueSearcher searcher(graph, node_budget);
  try {
    const std::size_t omega = searcher.run(all, 0, false).size();

    // Build the lexicographically smallest maximum clique one vertex at a
    // time: take the smallest vertex that still admits a completion.
    Bits allowed = all;
    std::size_t need = omega;
    for (std::size_t v = 0; v < n && need > 0; ++v) {
      if (!test_bit(allowed, v)) continue;
      Bits rest(graph.words(), 0);
      const auto row = graph.row(v);
      for (std::size_t w = 0; w < rest.size(); ++w) rest[w] = allowed[w] & row[w];
      for (std::size_t u = 0; u <= v; ++u) clear_bit(rest, u);
      const bool completes = need == 1 || searcher.run(rest, need - 2, true).size() >= need - 1;
      if (completes) {
        result.vertices.push_back(v);
        allowed = std::move(rest);
        --need;
      }
    }
  } catch (const BudgetExceeded&) {
    result.vertices.clear();
    result.aborted = true;
  }
  result.nodes_expanded = searcher.nodes();
  return result;
}

Alignment align_points(std::span<const Point3> query, std::span<const Point3> map) {
  if (query.size() != map.size()) throw DataError("alignment needs equally many query and map points");
  const std::size_t n = query.size();
  if (n < 3) throw DegenerateError("alignment needs at least 3 point pairs");
  const Point3 qc = centroid_of(query);
  const Point3 mc = centroid_of(map);
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d qcov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d dq = query[i] - qc;
    cross += dq * (map[i] - mc).transpose();
    qcov += dq * dq.transpose();
  }
  qcov /= static_cast<double>(n);
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(qcov).singularValues();
  if (!(sv[1] > 1e-9)) throw DegenerateError("collinear or coincident point configuration");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = v * d * u.transpose();
  const Eigen::Vector3d t = mc - r * qc;

  Alignment out{SE3(r, t), 0.0};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (r * query[i] + t - map[i]).squaredNorm();
  out.rms_residual = std::sqrt(sum / static_cast<double>(n));
  return out;
}

Alignment align_centroids(std::span<const std::pair<Point3, Point3>> pairs) {
  Points3 q;
  Points3 m;
  q.reserve(pairs.size());
  m.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    q.push_back(a);
    m.push_back(b);
  }
  return align_points(q, m);
}

PoseEstimate verify(std::span<const MatchCandidate> candidates, const VerificationConfig& cfg) {
  if (cfg.min_clique_size < 3) throw ConfigError("min_clique_size must be >= 3 for a 6-DOF pose");
  PoseEstimate est;
  if (candidates.empty()) {
    est.reason = "no candidate matches";
    return est;
  }
  std::vector<MatchCandidate> sorted(candidates.begin(), candidates.end());
  auto key = [](const MatchCandidate& c) {
    return std::make_tuple(c.query_segment_id, c.map_segment_id, c.descriptor_distance, c.query_centroid.x(),
                           c.query_centroid.y(), c.query_centroid.z(), c.map_centroid.x(), c.map_centroid.y(),
                           c.map_centroid.z());
  };
  std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });

  const ConsistencyGraph graph = build_graph(sorted, cfg.epsilon);
  const CliqueResult clique = max_clique(graph, cfg.node_budget);
  if (clique.aborted) {
    est.reason = "clique search exceeded its node budget";
    return est;
  }
  for (std::size_t v : clique.vertices) est.inliers.push_back(sorted[v]);
  if (est.inliers.size() < cfg.min_clique_size) {
    est.reason = "largest consistent set has " + std::to_string(est.inliers.size()) + " matches, need " +
                 std::to_string(cfg.min_clique_size);
    return est;
  }
  std::vector<std::pair<Point3, Point3>> pairs;
  for (const auto& c : est.inliers) pairs.emplace_back(c.query_centroid, c.map_centroid);
  try {
    const Alignment a = align_centroids(pairs);
    est.T_map_query = a.transform;
    est.rms_residual = a.rms_residual;
    est.accepted = true;
  } catch (const DegenerateError&) {
    est.reason = "degenerate (collinear) clique geometry";
  }
  return est;
}

}  // namespace oneshot
