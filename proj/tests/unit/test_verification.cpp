#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oneshot/error.hpp"
#include "oneshot/verification.hpp"
#include "scenes.hpp"

using namespace oneshot;

namespace {

ConsistencyGraph random_graph(std::mt19937_64& rng, std::size_t n, double density) {
  ConsistencyGraph g(n, 1.0);
  std::bernoulli_distribution edge(density);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (edge(rng)) g.add_edge(i, j);
    }
  }
  return g;
}

// Exhaustive search over all 2^n subsets; returns the lexicographically
// smallest sorted vertex list among the largest cliques.
std::vector<std::size_t> brute_force_clique(const ConsistencyGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> best;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<std::size_t> vs;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1u) vs.push_back(i);
    }
    if (vs.size() < best.size()) continue;
    bool clique = true;
    for (std::size_t a = 0; a < vs.size() && clique; ++a) {
      for (std::size_t b = a + 1; b < vs.size() && clique; ++b) clique = g.adjacent(vs[a], vs[b]);
    }
    if (!clique) continue;
    if (vs.size() > best.size() || vs < best) best = vs;
  }
  return best;
}

std::vector<MatchCandidate> synthetic_candidates(std::mt19937_64& rng, const SE3& T_map_query, std::size_t inliers,
                                                 std::size_t outliers) {
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::vector<MatchCandidate> out;
  for (std::size_t i = 0; i < inliers; ++i) {
    MatchCandidate c;
    c.query_segment_id = static_cast<std::uint32_t>(i);
    c.map_segment_id = static_cast<std::uint32_t>(100 + i);
    c.query_centroid = Point3(u(rng), u(rng), 0.1 * u(rng));
    c.map_centroid = T_map_query * c.query_centroid;
    c.descriptor_distance = 0.1 * static_cast<double>(i);
    out.push_back(c);
  }
  for (std::size_t i = 0; i < outliers; ++i) {
    MatchCandidate c;
    c.query_segment_id = static_cast<std::uint32_t>(i % (inliers + 3));
    c.map_segment_id = static_cast<std::uint32_t>(500 + i);
    c.query_centroid = out.empty() ? Point3(u(rng), u(rng), 0) : out[c.query_segment_id % inliers].query_centroid;
    c.map_centroid = Point3(u(rng), u(rng), 0.1 * u(rng));
    c.descriptor_distance = 0.05 * static_cast<double>(i);
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(Graph, EdgesFollowDistancePreservation) {
  std::vector<MatchCandidate> c(4);
  c[0] = {0, 10, 0.0, Point3(0, 0, 0), Point3(5, 5, 0)};
  c[1] = {1, 11, 0.0, Point3(3, 0, 0), Point3(5, 8.3, 0)};  // |3 - 3.3| <= 0.4
  c[2] = {2, 12, 0.0, Point3(0, 4, 0), Point3(5, 10, 0)};   // |4 - 5| > 0.4
  c[3] = {0, 13, 0.0, Point3(0, 0, 0), Point3(5, 5, 0)};    // shares query segment with 0
  const ConsistencyGraph g = build_graph(c, 0.4);
  EXPECT_TRUE(g.adjacent(0, 1));
  EXPECT_TRUE(g.adjacent(1, 0));
  EXPECT_FALSE(g.adjacent(0, 2));
  EXPECT_FALSE(g.adjacent(0, 3));
  EXPECT_FALSE(g.adjacent(0, 0));
  EXPECT_EQ(g.degree(0), 1u);
  EXPECT_THROW(build_graph(c, 0.0), ConfigError);
}

TEST(Graph, SelfLoopsIgnoredAndEdgeCount) {
  ConsistencyGraph g(70, 1.0);
  g.add_edge(3, 3);
  g.add_edge(3, 68);
  g.add_edge(68, 3);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_TRUE(g.adjacent(68, 3));
  EXPECT_EQ(g.words(), 2u);
}

TEST(MaxClique, MatchesBruteForce) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 14);
    const double density = std::array{0.2, 0.5, 0.8}[static_cast<std::size_t>(trial % 3)];
    const ConsistencyGraph g = random_graph(rng, n, density);
    const CliqueResult r = max_clique(g);
    EXPECT_FALSE(r.aborted);
    EXPECT_EQ(r.vertices, brute_force_clique(g)) << "trial " << trial << " n " << n;
  }
}

TEST(MaxClique, EmptyAndEdgeless) {
  EXPECT_TRUE(max_clique(ConsistencyGraph(0, 1.0)).vertices.empty());
  EXPECT_EQ(max_clique(ConsistencyGraph(5, 1.0)).vertices, std::vector<std::size_t>{0});
}

TEST(MaxClique, IndependentOfVertexLabelingUpToSize) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 40;
    const ConsistencyGraph g = random_graph(rng, n, 0.5);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ConsistencyGraph h(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (g.adjacent(i, j)) h.add_edge(perm[i], perm[j]);
      }
    }
    const auto a = max_clique(g).vertices;
    const auto b = max_clique(h).vertices;
    EXPECT_EQ(a.size(), b.size());
    for (std::size_t x = 0; x < b.size(); ++x) {
      for (std::size_t y = x + 1; y < b.size(); ++y) EXPECT_TRUE(h.adjacent(b[x], b[y]));
    }
  }
}

TEST(MaxClique, BudgetAbort) {
  std::mt19937_64 rng(33);
  const ConsistencyGraph g = random_graph(rng, 150, 0.9);
  const CliqueResult r = max_clique(g, 50);
  EXPECT_TRUE(r.aborted);
  EXPECT_TRUE(r.vertices.empty());
}

TEST(Align, RecoversExactTransform) {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const SE3 T = fixtures::random_se3(rng, 20.0);
    const Points3 q = fixtures::random_points(rng, 3 + static_cast<std::size_t>(trial % 10));
    Points3 m;
    for (const auto& p : q) m.push_back(T * p);
    const Alignment a = align_points(q, m);
    EXPECT_TRUE(a.transform.matrix().isApprox(T.matrix(), 1e-9));
    EXPECT_LT(a.rms_residual, 1e-9);
    EXPECT_TRUE(a.transform.is_valid());
  }
}

TEST(Align, ResidualMatchesDefinition) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 0.05);
  const SE3 T = fixtures::random_se3(rng);
  const Points3 q = fixtures::random_points(rng, 30);
  Points3 m;
  for (const auto& p : q) m.push_back(T * p + Point3(n(rng), n(rng), n(rng)));
  const Alignment a = align_points(q, m);
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += (a.transform * q[i] - m[i]).squaredNorm();
  EXPECT_NEAR(a.rms_residual, std::sqrt(sum / static_cast<double>(q.size())), 1e-12);
  // A least-squares optimum cannot be beaten by the true transform.
  double truth = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) truth += (T * q[i] - m[i]).squaredNorm();
  EXPECT_LE(sum, truth + 1e-12);
}

TEST(Align, DegenerateInputs) {
  const Points3 two{Point3(0, 0, 0), Point3(1, 0, 0)};
  EXPECT_THROW(align_points(two, two), DegenerateError);
  const Points3 line{Point3(0, 0, 0), Point3(1, 1, 1), Point3(2, 2, 2), Point3(5, 5, 5)};
  EXPECT_THROW(align_points(line, line), DegenerateError);
  EXPECT_THROW(align_points(line, two), DataError);
}

TEST(Verify, AcceptsConsistentSetAndIgnoresOrder) {
  std::mt19937_64 rng(50);
  const SE3 T = SE3::from_yaw(0.8, Point3(12, -4, 0.3));
  auto c = synthetic_candidates(rng, T, 7, 25);
  VerificationConfig cfg;
  const PoseEstimate a = verify(c, cfg);
  ASSERT_TRUE(a.accepted) << a.reason;
  EXPECT_TRUE(a.reason.empty());
  EXPECT_EQ(a.inliers.size(), 7u);
  EXPECT_TRUE(a.T_map_query.matrix().isApprox(T.matrix(), 1e-9));
  for (int i = 0; i < 5; ++i) {
    std::shuffle(c.begin(), c.end(), rng);
    const PoseEstimate b = verify(c, cfg);
    EXPECT_EQ(b.T_map_query.matrix(), a.T_map_query.matrix());
    ASSERT_EQ(b.inliers.size(), a.inliers.size());
    for (std::size_t k = 0; k < a.inliers.size(); ++k) {
      EXPECT_EQ(b.inliers[k].map_segment_id, a.inliers[k].map_segment_id);
    }
  }
}

TEST(Verify, Rejections) {
  std::mt19937_64 rng(51);
  VerificationConfig cfg;
  EXPECT_FALSE(verify({}, cfg).accepted);
  EXPECT_EQ(verify({}, cfg).reason, "no candidate matches");

  const auto few = synthetic_candidates(rng, SE3(), 3, 0);
  const PoseEstimate r = verify(few, cfg);
  EXPECT_FALSE(r.accepted);
  EXPECT_NE(r.reason.find("need 4"), std::string::npos) << r.reason;

  std::vector<MatchCandidate> collinear;
  for (std::uint32_t i = 0; i < 5; ++i) {
    collinear.push_back({i, 10 + i, 0.0, Point3(i, 0, 0), Point3(i, 0, 0)});
  }
  const PoseEstimate d = verify(collinear, cfg);
  EXPECT_FALSE(d.accepted);
  EXPECT_NE(d.reason.find("degenerate"), std::string::npos);

  cfg.min_clique_size = 2;
  EXPECT_THROW(verify(few, cfg), ConfigError);
}

TEST(Icp, ConvergesFromPerturbedGuess) {
  const auto scene = fixtures::two_box_scene();
  // Object points only, as used by the localizer; ground rings carry no yaw information.
  // The map accumulates scans from nearby poses so it is denser than the query.
  Points3 query, map;
  for (std::size_t i = 0; i < scene.sim.scan.points.size(); ++i) {
    if (scene.sim.labels[i] != kGroundLabel) query.push_back(scene.sim.scan.points[i]);
  }
  for (int k = 0; k < 12; ++k) {
    const SE3 pose = SE3::from_yaw(0.05 * (k - 6), Point3(-1.5 + 0.25 * k, 0.3 * (k % 3) - 0.3, fixtures::kSensorHeight - 0.05 * (k % 4)));
    const auto sim = simulate_scan(scene.world, pose, scene.lidar, 0.0, 100 + k);
    for (std::size_t i = 0; i < sim.scan.points.size(); ++i) {
      if (sim.labels[i] != kGroundLabel) map.push_back(pose * sim.scan.points[i]);
    }
  }
  const SE3 truth = scene.pose;
  const SE3 guess = SE3::from_yaw(deg2rad(1.5), Point3(0.15, -0.1, 0.05)) * truth;
  IcpConfig cfg;
  cfg.max_iter = 60;
  cfg.tol = 1e-9;
  const IcpResult r = icp_refine(query, map, guess, cfg);
  const SE3 refined = r.correction * guess;
  // Point-to-point accuracy is bounded by the map sampling (a few cm at 9 m);
  // require at least a tenfold reduction of the initial error.
  const double t0 = (guess.translation() - truth.translation()).norm();
  EXPECT_LT((refined.translation() - truth.translation()).norm(), 0.1 * t0);
  EXPECT_LT(fixtures::yaw_error_deg(refined, truth), 0.15);
  EXPECT_LT(r.rms, 0.03);
  EXPECT_EQ(r.correspondences, query.size());
  EXPECT_GE(r.iterations, 1u);
}

TEST(Icp, IdentityWhenAlreadyAligned) {
  std::mt19937_64 rng(60);
  const Points3 pts = fixtures::random_points(rng, 400, 3.0);
  const IcpResult r = icp_refine(pts, pts, SE3());
  EXPECT_TRUE(r.correction.matrix().isIdentity(1e-9));
  EXPECT_LT(r.rms, 1e-9);
}
