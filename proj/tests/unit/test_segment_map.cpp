#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "oneshot/binary_io.hpp"
#include "oneshot/error.hpp"
#include "oneshot/segment_map.hpp"
#include "scenes.hpp"

using namespace oneshot;
namespace fs = std::filesystem;

namespace {

std::uint32_t bitwise_crc32(std::span<const std::uint8_t> bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

MapSegment make_map_segment(std::mt19937_64& rng, std::uint32_t id, std::size_t dim, std::size_t n_points) {
  MapSegment m;
  m.segment.id = id;
  m.segment.frame = Frame::kWorld;
  m.segment.points = fixtures::random_points(rng, n_points, 20.0);
  m.segment.recompute_centroid();
  std::normal_distribution<float> g(0.0f, 1.0f);
  m.descriptor.values.resize(dim);
  for (float& v : m.descriptor.values) v = g(rng);
  return m;
}

SegmentMap random_map(std::uint64_t seed, std::size_t n, std::size_t dim = kHandcraftedDim) {
  std::mt19937_64 rng(seed);
  std::vector<MapSegment> segs;
  for (std::size_t i = 0; i < n; ++i) segs.push_back(make_map_segment(rng, static_cast<std::uint32_t>(n - 1 - i), dim, 5 + i % 7));
  MapMetadata meta;
  meta.creation_info = "unit test";
  return build_map(std::move(segs), meta);
}

}  // namespace

TEST(Crc32, CheckValueAndBitwiseOracle) {
  const std::string check = "123456789";
  EXPECT_EQ(crc32(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size())), 0xCBF43926u);
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> bytes(10000);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
  EXPECT_EQ(crc32(bytes), bitwise_crc32(bytes));
}

TEST(BuildMap, SortsByIdAndFillsDim) {
  const SegmentMap map = random_map(2, 30);
  ASSERT_EQ(map.size(), 30u);
  EXPECT_EQ(map.dim(), kHandcraftedDim);
  for (std::size_t i = 0; i < map.size(); ++i) EXPECT_EQ(map.segments()[i].segment.id, i);
  ASSERT_NE(map.find(7), nullptr);
  EXPECT_EQ(map.find(7)->segment.id, 7u);
  EXPECT_EQ(map.find(99), nullptr);
  EXPECT_TRUE(map.has_points());
  EXPECT_FALSE(map.without_points().has_points());
  EXPECT_TRUE(map.without_points().segments()[3].segment.points.empty());
}

TEST(BuildMap, RejectsBadInput) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(build_map({}, {}), DataError);
  EXPECT_THROW(build_map({make_map_segment(rng, 1, 4, 5), make_map_segment(rng, 1, 4, 5)}, {}), DataError);
  EXPECT_THROW(build_map({make_map_segment(rng, 1, 4, 5), make_map_segment(rng, 2, 5, 5)}, {}), DataError);
  auto bad = make_map_segment(rng, 1, 4, 5);
  bad.descriptor.values[2] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(build_map({bad}, {}), DataError);
}

TEST(Knn, OrderMatchesLinearScanWithIdTies) {
  std::mt19937_64 rng(4);
  std::vector<MapSegment> segs;
  std::uniform_int_distribution<int> u(0, 2);
  for (std::uint32_t i = 0; i < 200; ++i) {
    MapSegment m = make_map_segment(rng, 199 - i, 3, 4);
    for (float& v : m.descriptor.values) v = static_cast<float>(u(rng));
    segs.push_back(std::move(m));
  }
  const SegmentMap map = build_map(segs, {});
  for (int q = 0; q < 30; ++q) {
    const Descriptor query{{float(u(rng)), float(u(rng)), float(u(rng))}};
    const auto got = knn(map, query, 25, 3, Point3(1, 2, 3));
    std::vector<std::pair<double, std::uint32_t>> expected;
    for (const auto& s : map.segments()) expected.emplace_back(descriptor_distance(query, s.descriptor), s.segment.id);
    std::sort(expected.begin(), expected.end());
    ASSERT_EQ(got.size(), 25u);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].map_segment_id, expected[i].second);
      EXPECT_DOUBLE_EQ(got[i].descriptor_distance, expected[i].first);
      EXPECT_EQ(got[i].query_segment_id, 3u);
      EXPECT_EQ(got[i].query_centroid, Point3(1, 2, 3));
      EXPECT_EQ(got[i].map_centroid, map.find(got[i].map_segment_id)->segment.centroid);
    }
  }
  EXPECT_EQ(knn(map, Descriptor{{0, 0, 0}}, 1000, 0).size(), 200u);
  EXPECT_THROW(knn(map, Descriptor{{0, 0}}, 3), DataError);
}

TEST(MapFile, RoundTripIsBitExact) {
  const SegmentMap map = random_map(5, 40);
  const fs::path dir = fixtures::temp_dir("map_rt");
  save_map(map, dir / "m.oslm");
  const SegmentMap back = load_map(dir / "m.oslm");
  EXPECT_EQ(back.metadata(), map.metadata());
  ASSERT_EQ(back.size(), map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& a = map.segments()[i];
    const auto& b = back.segments()[i];
    EXPECT_EQ(a.segment.id, b.segment.id);
    EXPECT_EQ(a.segment.centroid, b.segment.centroid);
    EXPECT_EQ(0, std::memcmp(a.descriptor.values.data(), b.descriptor.values.data(), 4 * a.descriptor.dim()));
    ASSERT_EQ(a.segment.points.size(), b.segment.points.size());
    for (std::size_t j = 0; j < a.segment.points.size(); ++j) {
      EXPECT_EQ(b.segment.points[j], a.segment.points[j].cast<float>().cast<double>());
    }
  }
  EXPECT_EQ(encode_map(back), encode_map(map));
}

TEST(MapFile, WithoutPointsIsSmallerAndQueriesAgree) {
  const SegmentMap map = random_map(6, 25);
  const auto full = encode_map(map, true);
  const auto lean = encode_map(map, false);
  EXPECT_LT(lean.size(), full.size());
  const SegmentMap back = decode_map(lean);
  EXPECT_FALSE(back.has_points());
  EXPECT_TRUE(back.metadata().points_stripped);
  const Descriptor q = map.segments()[4].descriptor;
  const auto a = knn(map, q, 5);
  const auto b = knn(back, q, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].map_segment_id, b[i].map_segment_id);
  EXPECT_EQ(encode_map(back, true), lean);
}

TEST(MapFile, CorruptionRejected) {
  const auto bytes = encode_map(random_map(7, 10));
  // Trailer is the CRC-32 of everything before it, little-endian.
  const auto body = std::span(bytes).first(bytes.size() - 4);
  const std::uint32_t stored = bytes[bytes.size() - 4] | bytes[bytes.size() - 3] << 8 |
                               bytes[bytes.size() - 2] << 16 | static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  EXPECT_EQ(stored, bitwise_crc32(body));

  for (std::size_t pos : {std::size_t{20}, bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    EXPECT_THROW(decode_map(bad), FormatError) << "flipped byte " << pos;
  }
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_map(std::span(bytes).first(len)), FormatError) << "truncated to " << len;
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_map(trailing), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_map(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_map(version), FormatError);
  EXPECT_THROW(load_map("/nonexistent/map.oslm"), DataError);
}
