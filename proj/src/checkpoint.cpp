#include "stsn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stsn/errors.hpp"

namespace stsn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'S', 'N', 'C', 'K', 'P', 'T'};
constexpr uint16_t kVersion = 1;
constexpr uint32_t kMaxRank = 8;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  bool at_end() const { return pos >= buf.size(); }

  void need(size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw format_error(std::string("checkpoint truncated while reading ") + what);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint8_t(buf[pos + 1])) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor<float>& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw contract_error("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u16(out, kVersion);
  put_u64(out, ckpt.arch_hash);
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(out, uint32_t(name.size()));
    out.append(name);
    put_u32(out, uint32_t(t.rank()));
    for (int64_t d = 0; d < t.rank(); ++d) put_u32(out, uint32_t(t.dim(d)));
    const float* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) put_f32(out, p[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw format_error("cannot open checkpoint for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw format_error("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};

  std::string magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw format_error("not a checkpoint file (bad magic): " + path);
  Checkpoint ckpt;
  ckpt.version = r.u16("version");
  if (ckpt.version != kVersion)
    throw format_error("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.arch_hash = r.u64("architecture hash");

  while (!r.at_end()) {
    uint32_t name_len = r.u32("tensor name length");
    std::string name = r.bytes(name_len, "tensor name");
    uint32_t rank = r.u32("tensor rank");
    if (rank > kMaxRank)
      throw format_error("checkpoint tensor '" + name + "' has implausible rank " +
                         std::to_string(rank));
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = int64_t(r.u32("tensor dimension"));
      numel *= shape[d];
    }
    r.need(size_t(numel) * 4, "tensor data");
    Tensor<float> t(shape);
    float* p = t.data();
    for (int64_t i = 0; i < numel; ++i) p[i] = r.f32("tensor data");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, uint64_t expected_hash) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.arch_hash != expected_hash)
    throw format_error("checkpoint architecture hash mismatch for " + path + ": file has " +
                       std::to_string(ckpt.arch_hash) + ", current configuration hashes to " +
                       std::to_string(expected_hash));
  return ckpt;
}

}  // namespace stsn
