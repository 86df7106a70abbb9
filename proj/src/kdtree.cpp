#include "oneshot/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "oneshot/error.hpp"

namespace oneshot {

namespace {

bool better(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

struct WorseFirst {
  bool operator()(const KdTree::Neighbor& a, const KdTree::Neighbor& b) const { return better(a, b); }
};

}  // namespace

KdTree::KdTree(std::vector<double> data, std::size_t dim, std::size_t leaf_size)
    : data_(std::move(data)), dim_(dim), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (dim_ == 0) throw DataError("k-d tree dimension must be positive");
  if (data_.size() % dim_ != 0) throw DataError("k-d tree data size is not a multiple of the dimension");
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) build(0, order_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  std::size_t best_dim = 0;
  double best_spread = -1.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    double lo = data_[order_[begin] * dim_ + d];
    double hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      const double v = data_[order_[i] * dim_ + d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = d;
    }
  }
  if (best_spread <= 0.0) return id;  // all points identical

  const std::size_t mid = begin + (end - begin) / 2;
  auto less = [&](std::size_t a, std::size_t b) {
    const double va = data_[a * dim_ + best_dim];
    const double vb = data_[b * dim_ + best_dim];
    return va < vb || (va == vb && a < b);
  };
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), less);
  const double split = data_[order_[mid] * dim_ + best_dim];
  nodes_[static_cast<std::size_t>(id)].split_dim = best_dim;
  nodes_[static_cast<std::size_t>(id)].split_value = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

double KdTree::squared_distance(std::span<const double> q, std::size_t i) const {
  const double* p = data_.data() + i * dim_;
  double sum = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    const double diff = q[d] - p[d];
    sum += diff * diff;
  }
  return sum;
}

std::vector<KdTree::Neighbor> KdTree::knn(std::span<const double> query, std::size_t k) const {
  if (query.size() != dim_) throw DataError("query dimension does not match the k-d tree");
  std::vector<Neighbor> result;
  if (k == 0 || empty()) return result;
  // Max-heap on (distance, index): the top is the current worst kept neighbor.
  std::priority_queue<Neighbor, std::vector<Neighbor>, WorseFirst> heap;

  auto visit = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.leaf()) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{order_[i], squared_distance(query, order_[i])};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (better(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = query[node.split_dim] - node.split_value;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().squared_distance) self(self, far);
  };
  visit(visit, 0);

  result.resize(heap.size());
  for (std::size_t i = result.size(); i-- > 0;) {
    result[i] = heap.top();
    heap.pop();
  }
  return result;
}

std::vector<KdTree::Neighbor> KdTree::radius_search(std::span<const double> query, double radius) const {
  if (query.size() != dim_) throw DataError("query dimension does not match the k-d tree");
  std::vector<Neighbor> result;
  if (empty()) return result;
  const double r2 = radius * radius;
  auto visit = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.leaf()) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(query, order_[i]);
        if (d2 <= r2) result.push_back({order_[i], d2});
      }
      return;
    }
    const double diff = query[node.split_dim] - node.split_value;
    if (diff <= radius) self(self, node.left);
    if (diff >= -radius) self(self, node.right);
  };
  visit(visit, 0);
  std::sort(result.begin(), result.end(), better);
  return result;
}

std::vector<std::size_t> KdTree::collect_all() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (const Node& node : nodes_) {
    if (node.leaf()) out.insert(out.end(), order_.begin() + static_cast<std::ptrdiff_t>(node.begin),
                                order_.begin() + static_cast<std::ptrdiff_t>(node.end));
  }
  return out;
}

}  // namespace oneshot
