#include <cmath>

#include "oneshot/error.hpp"
#include "oneshot/kdtree.hpp"
#include "oneshot/verification.hpp"

namespace oneshot {

IcpResult icp_refine(std::span<const Point3> query, std::span<const Point3> map, const SE3& T_init,
                     const IcpConfig& cfg) {
  if (query.empty() || map.empty()) throw DataError("ICP needs non-empty query and map clouds");
  std::vector<double> flat;
  flat.reserve(map.size() * 3);
  for (const Point3& p : map) flat.insert(flat.end(), {p.x(), p.y(), p.z()});
  const KdTree tree(std::move(flat), 3, 16);
  const double max_d2 = cfg.max_correspondence_distance * cfg.max_correspondence_distance;

  IcpResult result;
  Points3 src;
  Points3 dst;
  auto associate = [&](const SE3& T) {
    src.clear();
    dst.clear();
    double sum = 0.0;
    for (const Point3& q : query) {
      const Point3 p = T * q;
      const auto nn = tree.knn(std::span<const double>(p.data(), 3), 1);
      if (nn.empty() || nn.front().squared_distance > max_d2) continue;
      src.push_back(p);
      dst.push_back(map[nn.front().index]);
      sum += nn.front().squared_distance;
    }
    return src.empty() ? 0.0 : std::sqrt(sum / static_cast<double>(src.size()));
  };

  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    associate(result.correction * T_init);
    if (src.size() < 3) break;
    Alignment step;
    try {
      step = align_points(src, dst);
    } catch (const DegenerateError&) {
      break;
    }
    result.correction = step.transform * result.correction;
    result.iterations = it + 1;
    if (step.transform.translation().norm() < cfg.tol) break;
  }
  result.rms = associate(result.correction * T_init);
  result.correspondences = src.size();
  return result;
}

}  // namespace oneshot
