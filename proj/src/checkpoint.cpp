#include "apm/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace apm {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'M', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Bounds-checked little-endian reader over the file bytes.
class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (remaining() < n)
      throw TruncatedFileError(std::string("checkpoint: truncated file while reading ") + what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t get_u8(const char* what) { return *take(1, what); }

  std::uint32_t get_u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t get_u64(const char* what) {
    const std::uint8_t* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  double get_f64(const char* what) { return std::bit_cast<double>(get_u64(what)); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::array<std::uint8_t, 32> config_digest(const UNetConfig& cfg) {
  const std::string canonical = canonical_config_string(cfg);
  std::array<std::uint8_t, 32> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(canonical.data()),
         canonical.size(), digest.data());
  return digest;
}

std::vector<std::uint8_t> serialize_checkpoint(const ParameterStore& store,
                                               const UNetConfig& cfg) {
  if (store.masks.size() != store.overrides.size())
    throw CheckpointError("checkpoint: store has mismatched masks/overrides");

  std::vector<std::uint8_t> out;
  out.reserve(64 + store.base.size() * 8);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  const auto digest = config_digest(cfg);
  out.insert(out.end(), digest.begin(), digest.end());
  put_u64(out, store.base.size());
  for (double v : store.base) put_f64(out, v);
  out.push_back(static_cast<std::uint8_t>(store.masks.size()));

  for (const auto& [task, mask] : store.masks) {
    const auto& overrides = store.overrides.at(task);
    if (mask.bits.size() != store.base.size())
      throw CheckpointError("checkpoint: mask length does not match base");
    if (overrides.size() != mask.bits.popcount())
      throw CheckpointError("checkpoint: override length does not match popcount");
    out.push_back(static_cast<std::uint8_t>(task));
    put_u64(out, overrides.size());
    out.insert(out.end(), mask.bits.bytes().begin(), mask.bits.bytes().end());
    for (double v : overrides) put_f64(out, v);
    put_f64(out, mask.gamma);
  }
  return out;
}

ParameterStore parse_checkpoint(const std::vector<std::uint8_t>& bytes,
                                const UNetConfig& cfg, std::size_t max_bytes) {
  Reader r(bytes);

  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw BadMagicError("checkpoint: bad magic (not an APMK file)");

  const std::uint32_t version = r.get_u32("version");
  if (version != kVersion)
    throw BadVersionError("checkpoint: unsupported version " +
                          std::to_string(version));

  const std::uint8_t* digest = r.take(32, "config digest");
  const auto expected = config_digest(cfg);
  if (std::memcmp(digest, expected.data(), 32) != 0)
    throw DigestMismatchError(
        "checkpoint: config digest mismatch (file was written for a "
        "different model config)");

  const std::uint64_t total_len = r.get_u64("parameter count");
  if (total_len > max_bytes / 8)
    throw SizeCapError("checkpoint: parameter count exceeds the size cap");
  const auto registry = ParameterRegistry::for_config(cfg);
  if (total_len != registry.total_len())
    throw CheckpointError("checkpoint: parameter count " +
                          std::to_string(total_len) +
                          " does not match the registry (" +
                          std::to_string(registry.total_len()) + ")");

  ParameterStore store;
  store.base.resize(static_cast<std::size_t>(total_len));
  for (auto& v : store.base) v = r.get_f64("base parameters");

  const std::uint8_t task_count = r.get_u8("task count");
  if (task_count > kAllTasks.size())
    throw CheckpointError("checkpoint: task count " +
                          std::to_string(task_count) + " out of range");

  const std::size_t mask_bytes = (static_cast<std::size_t>(total_len) + 7) / 8;
  for (int t = 0; t < task_count; ++t) {
    const std::uint8_t id = r.get_u8("task id");
    Task task;
    try {
      task = task_from_id(id);
    } catch (const Error&) {
      throw CheckpointError("checkpoint: unknown task id " + std::to_string(id));
    }
    if (store.masks.contains(task))
      throw CheckpointError(std::string("checkpoint: duplicate task '") +
                            to_string(task) + "'");

    const std::uint64_t popcount = r.get_u64("mask popcount");
    if (popcount > max_bytes / 8)
      throw SizeCapError("checkpoint: popcount exceeds the size cap");
    if (popcount > total_len)
      throw PopcountError("checkpoint: popcount exceeds parameter count");

    const std::uint8_t* bits = r.take(mask_bytes, "mask bitset");
    DynBitset bitset = DynBitset::from_bytes(
        std::vector<std::uint8_t>(bits, bits + mask_bytes),
        static_cast<std::size_t>(total_len));
    if (!bitset.trailing_bits_clear())
      throw PopcountError("checkpoint: mask has set bits past the parameter count");
    if (bitset.popcount() != popcount)
      throw PopcountError(
          "checkpoint: mask popcount field does not match the bitset");

    std::vector<double> overrides(static_cast<std::size_t>(popcount));
    for (auto& v : overrides) v = r.get_f64("override values");

    TaskMask mask;
    mask.task = task;
    mask.bits = std::move(bitset);
    mask.gamma = r.get_f64("gamma");
    mask.fraction = total_len > 0 ? static_cast<double>(popcount) /
                                        static_cast<double>(total_len)
                                  : 0.0;
    store.masks[task] = std::move(mask);
    store.overrides[task] = std::move(overrides);
  }

  if (r.remaining() != 0)
    throw CheckpointError("checkpoint: trailing bytes after the last task");
  return store;
}

void save_checkpoint(const ParameterStore& store, const UNetConfig& cfg,
                     const std::string& path) {
  const auto bytes = serialize_checkpoint(store, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

ParameterStore load_checkpoint(const std::string& path, const UNetConfig& cfg,
                               std::size_t max_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return parse_checkpoint(bytes, cfg, max_bytes);
}

}  // namespace apm
