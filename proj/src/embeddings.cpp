#include <string>

#include "oneshot/binary_io.hpp"
#include "oneshot/descriptor.hpp"
#include "oneshot/error.hpp"

namespace oneshot {

namespace {
constexpr std::uint32_t kEmbeddingVersion = 1;
}

void EmbeddingTable::insert(EmbeddingKey key, Descriptor d) {
  if (records_.empty() && dim_ == 0) dim_ = d.dim();
  if (d.dim() != dim_) {
    throw DataError("embedding dim mismatch: table has " + std::to_string(dim_) + ", record has " +
                    std::to_string(d.dim()));
  }
  if (!d.is_finite()) throw DataError("embedding contains non-finite values");
  if (!records_.emplace(key, std::move(d)).second) {
    throw DataError("duplicate embedding key (scan " + std::to_string(key.first) + ", segment " +
                    std::to_string(key.second) + ")");
  }
}

const Descriptor* EmbeddingTable::find(EmbeddingKey key) const {
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

void EmbeddingTable::merge(const EmbeddingTable& other) {
  if (other.empty()) return;
  if (empty()) dim_ = other.dim_;
  if (other.dim_ != dim_) {
    throw DataError("embedding dim mismatch: " + std::to_string(dim_) + " vs " + std::to_string(other.dim_));
  }
  for (const auto& [key, d] : other.records_) insert(key, d);
}

EmbeddingTable decode_embeddings(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("OSEM");
  if (const auto v = r.get_u32(); v != kEmbeddingVersion) {
    throw FormatError(context + ": unsupported version " + std::to_string(v));
  }
  const std::uint32_t dim = r.get_u32();
  const std::uint64_t count = r.get_u64();
  if (dim == 0 && count > 0) throw FormatError(context + ": zero descriptor dimension");
  const std::uint64_t record_bytes = 8 + 4ull * dim;
  if (count > 0 && r.remaining() / record_bytes < count) {
    throw FormatError(context + ": header announces " + std::to_string(count) + " records but the file is truncated");
  }
  if (r.remaining() != count * record_bytes) throw FormatError(context + ": trailing bytes after records");
  EmbeddingTable table(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t scan_id = r.get_u32();
    const std::uint32_t segment_id = r.get_u32();
    Descriptor d;
    d.values.resize(dim);
    for (auto& v : d.values) v = r.get_f32();
    table.insert({scan_id, segment_id}, std::move(d));
  }
  return table;
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingTable& table) {
  ByteWriter w;
  w.put_magic("OSEM");
  w.put_u32(kEmbeddingVersion);
  w.put_u32(static_cast<std::uint32_t>(table.dim()));
  w.put_u64(table.size());
  for (const auto& [key, d] : table.records()) {
    w.put_u32(key.first);
    w.put_u32(key.second);
    for (float v : d.values) w.put_f32(v);
  }
  return w.release();
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_binary_file(path), path.string());
}

EmbeddingTable load_embeddings(std::span<const std::filesystem::path> paths) {
  EmbeddingTable merged;
  for (const auto& p : paths) merged.merge(load_embeddings(p));
  return merged;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_binary_file(path, encode_embeddings(table));
}

}  // namespace oneshot
