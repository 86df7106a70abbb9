#include "oneshot/segment_map.hpp"

#include <algorithm>
#include <cmath>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

namespace {

constexpr std::uint32_t kFlagPointsStripped = 1u;

Point3 to_float_precision(const Point3& p) {
  return {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
}

}  // namespace

const MapSegment* SegmentMap::find(std::uint32_t id) const {
  const auto it = std::lower_bound(segments_.begin(), segments_.end(), id,
                                   [](const MapSegment& s, std::uint32_t v) { return s.segment.id < v; });
  return it != segments_.end() && it->segment.id == id ? &*it : nullptr;
}

SegmentMap SegmentMap::without_points() const {
  SegmentMap out = *this;
  for (auto& s : out.segments_) {
    s.segment.points.clear();
    s.segment.point_indices.clear();
  }
  out.metadata_.points_stripped = true;
  return out;
}

SegmentMap build_map(std::vector<MapSegment> segments, MapMetadata metadata) {
  if (segments.empty()) throw DataError("cannot build a map from zero segments");
  const std::size_t dim = segments.front().descriptor.dim();
  if (dim == 0) throw DataError("map descriptors must have positive dimension");
  std::sort(segments.begin(), segments.end(),
            [](const MapSegment& a, const MapSegment& b) { return a.segment.id < b.segment.id; });
  std::vector<double> data;
  data.reserve(segments.size() * dim);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    MapSegment& s = segments[i];
    if (i > 0 && segments[i - 1].segment.id == s.segment.id) {
      throw DataError("duplicate map segment id " + std::to_string(s.segment.id));
    }
    if (s.descriptor.dim() != dim) {
      throw DataError("descriptor dim mismatch in map: " + std::to_string(s.descriptor.dim()) + " vs " +
                      std::to_string(dim));
    }
    if (!s.descriptor.is_finite()) throw DataError("non-finite descriptor in map segment " + std::to_string(s.segment.id));
    if (!s.segment.centroid.allFinite()) throw DataError("non-finite centroid in map segment " + std::to_string(s.segment.id));
    // Provenance is not persisted; keep in-memory maps identical to loaded ones.
    s.segment.frame = Frame::kWorld;
    s.segment.scan_id = 0;
    s.segment.point_indices.clear();
    for (Point3& p : s.segment.points) p = to_float_precision(p);
    for (float v : s.descriptor.values) data.push_back(v);
  }
  metadata.dim = dim;
  if (metadata.points_stripped) {
    for (auto& s : segments) s.segment.points.clear();
  }

  SegmentMap map;
  map.segments_ = std::move(segments);
  map.metadata_ = std::move(metadata);
  map.index_ = KdTree(std::move(data), dim, 16);
  return map;
}

std::vector<MatchCandidate> knn(const SegmentMap& map, const Descriptor& query, std::size_t k,
                                std::uint32_t query_segment_id, const Point3& query_centroid) {
  if (query.dim() != map.dim()) {
    throw DataError("query descriptor dim " + std::to_string(query.dim()) + " does not match map dim " +
                    std::to_string(map.dim()));
  }
  if (k == 0) throw ConfigError("k must be >= 1");
  std::vector<double> q(query.values.begin(), query.values.end());
  std::vector<MatchCandidate> out;
  for (const auto& n : map.index().knn(q, k)) {
    const MapSegment& s = map.segments()[n.index];
    out.push_back({query_segment_id, s.segment.id, std::sqrt(n.squared_distance), query_centroid, s.segment.centroid});
  }
  return out;
}

std::vector<std::uint8_t> encode_map(const SegmentMap& map, bool include_points) {
  const bool with_points = include_points && map.has_points();
  std::uint64_t total_points = 0;
  if (with_points)
    for (const auto& s : map.segments()) total_points += s.segment.points.size();

  ByteWriter w;
  w.put_magic("OSLM");
  w.put_u32(kMapVersion);
  w.put_u32(static_cast<std::uint32_t>(map.dim()));
  w.put_string(map.metadata().backend_id);
  w.put_string(map.metadata().creation_info);
  w.put_u32(with_points ? 0u : kFlagPointsStripped);
  w.put_u64(map.size());
  w.put_u64(total_points);
  for (const auto& s : map.segments()) {
    w.put_u32(s.segment.id);
    w.put_f64(s.segment.centroid.x());
    w.put_f64(s.segment.centroid.y());
    w.put_f64(s.segment.centroid.z());
    w.put_u32(with_points ? static_cast<std::uint32_t>(s.segment.points.size()) : 0u);
    if (with_points) {
      for (const Point3& p : s.segment.points) {
        w.put_f32(static_cast<float>(p.x()));
        w.put_f32(static_cast<float>(p.y()));
        w.put_f32(static_cast<float>(p.z()));
      }
    }
    for (float v : s.descriptor.values) w.put_f32(v);
  }
  w.put_u32(crc32(w.bytes()));
  return w.release();
}

SegmentMap decode_map(std::span<const std::uint8_t> bytes, const std::string& context) {
  if (bytes.size() < 8) throw FormatError(context + ": truncated map file");
  {
    ByteReader head(bytes, context);
    head.expect_magic("OSLM");
    if (const auto v = head.get_u32(); v != kMapVersion) {
      throw FormatError(context + ": unsupported map version " + std::to_string(v));
    }
  }
  if (bytes.size() < 12) throw FormatError(context + ": truncated map file");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4), context);
  if (tail.get_u32() != crc32(body)) throw FormatError(context + ": checksum mismatch (corrupt or truncated file)");

  ByteReader r(body, context);
  r.expect_magic("OSLM");
  r.get_u32();
  const std::uint32_t dim = r.get_u32();
  MapMetadata meta;
  meta.backend_id = r.get_string();
  meta.creation_info = r.get_string();
  const std::uint32_t flags = r.get_u32();
  meta.points_stripped = (flags & kFlagPointsStripped) != 0;
  const std::uint64_t count = r.get_u64();
  r.get_u64();  // total point count, informational
  // Each record needs at least id + centroid + point count + descriptor.
  if (count == 0 || count > r.remaining() / (4 + 24 + 4 + 4ull * dim)) {
    throw FormatError(context + ": segment count " + std::to_string(count) + " inconsistent with file size");
  }
  std::vector<MapSegment> segments;
  segments.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    MapSegment s;
    s.segment.id = r.get_u32();
    s.segment.frame = Frame::kWorld;
    const double cx = r.get_f64();
    const double cy = r.get_f64();
    const double cz = r.get_f64();
    s.segment.centroid = Point3(cx, cy, cz);
    const std::uint32_t n = r.get_u32();
    if (n > r.remaining() / 12) throw FormatError(context + ": point count exceeds file size");
    s.segment.points.reserve(n);
    for (std::uint32_t j = 0; j < n; ++j) {
      const float x = r.get_f32();
      const float y = r.get_f32();
      const float z = r.get_f32();
      s.segment.points.emplace_back(x, y, z);
    }
    s.descriptor.values.resize(dim);
    for (auto& v : s.descriptor.values) v = r.get_f32();
    segments.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes before checksum");
  try {
    return build_map(std::move(segments), std::move(meta));
  } catch (const FormatError&) {
    throw;
  } catch (const DataError& e) {
    throw FormatError(context + ": " + e.what());
  }
}

void save_map(const SegmentMap& map, const std::filesystem::path& path, bool include_points) {
  write_binary_file(path, encode_map(map, include_points));
}

SegmentMap load_map(const std::filesystem::path& path) {
  return decode_map(read_binary_file(path), path.string());
}

}  // namespace oneshot
