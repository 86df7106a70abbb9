#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace oneshot {

/// Exact k-d tree over row-major points of arbitrary dimension. Splits at the
/// median of the dimension with the largest spread; leaves hold at most
/// `leaf_size` points. Queries return the same set and order as a linear scan
/// with ties broken by lower point index.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  KdTree() = default;
  KdTree(std::vector<double> data, std::size_t dim, std::size_t leaf_size = 16);

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return size() == 0; }

  std::vector<Neighbor> knn(std::span<const double> query, std::size_t k) const;
  std::vector<Neighbor> radius_search(std::span<const double> query, double radius) const;

  /// Every stored index, in tree order.
  std::vector<std::size_t> collect_all() const;
  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t split_dim = 0;
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    bool leaf() const { return left < 0; }
  };

  int build(std::size_t begin, std::size_t end);
  double squared_distance(std::span<const double> q, std::size_t i) const;

  std::vector<double> data_;
  std::size_t dim_ = 0;
  std::size_t leaf_size_ = 16;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace oneshot
