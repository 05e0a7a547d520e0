#include "taskgrid/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "taskgrid/lang.hpp"
#include "taskgrid/rng.hpp"

namespace taskgrid::ckpt {

namespace {

constexpr char kMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& b, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(b, v);
}
void put_str(std::string& b, const std::string& s) {
  put_u64(b, s.size());
  b += s;
}

struct Reader {
  const std::string& b;
  size_t at = 0;

  void need(size_t n) const {
    if (at + n > b.size()) throw CorruptCheckpoint("truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    at += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
    at += 8;
    return v;
  }
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string str() {
    uint64_t n = u64();
    need(n);
    std::string s = b.substr(at, n);
    at += n;
    return s;
  }
};

uint64_t fnv1a(const char* p, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void save(const Checkpoint& c, const std::string& path) {
  std::string b(kMagic, sizeof(kMagic));
  put_u32(b, kVersion);
  put_u64(b, c.seed);
  put_u64(b, static_cast<uint64_t>(c.frames));
  put_str(b, c.run.to_text());
  put_u32(b, static_cast<uint32_t>(c.vocab.size()));
  for (const auto& w : c.vocab) put_str(b, w);
  put_str(b, c.rng_state);
  put_u32(b, static_cast<uint32_t>(c.params.items().size()));
  for (const auto& [name, t] : c.params.items()) {
    put_str(b, name);
    put_u32(b, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(b, static_cast<uint32_t>(d));
    put_u64(b, static_cast<uint64_t>(t.size()));
    for (float f : t.values()) put_f32(b, f);
  }
  put_u64(b, fnv1a(b.data(), b.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorruptCheckpoint("cannot open for writing: " + path);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!out) throw CorruptCheckpoint("short write: " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open: " + path);
  std::string b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (b.size() < sizeof(kMagic) + 4 + 8) throw CorruptCheckpoint("file too small");
  if (std::memcmp(b.data(), kMagic, sizeof(kMagic)) != 0) throw CorruptCheckpoint("bad magic");
  {
    Reader tail{b, b.size() - 8};
    if (tail.u64() != fnv1a(b.data(), b.size() - 8)) throw CorruptCheckpoint("checksum mismatch");
  }

  Reader r{b, sizeof(kMagic)};
  uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionMismatch("file has version " + std::to_string(version) + ", expected " + std::to_string(kVersion));

  Checkpoint c;
  c.seed = r.u64();
  c.frames = static_cast<int64_t>(r.u64());
  c.run = config::RunConfig::from_text(r.str());
  uint32_t nwords = r.u32();
  for (uint32_t i = 0; i < nwords; ++i) c.vocab.push_back(r.str());
  if (c.vocab != lang::vocabulary()) throw VersionMismatch("vocabulary order differs from this build");
  c.rng_state = r.str();
  uint32_t nparams = r.u32();
  for (uint32_t i = 0; i < nparams; ++i) {
    std::string name = r.str();
    uint32_t rank = r.u32();
    ad::Shape shape;
    for (uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.u32()));
    uint64_t count = r.u64();
    if (count != static_cast<uint64_t>(ad::shape_size(shape)))
      throw CorruptCheckpoint("parameter " + name + " count disagrees with shape");
    std::vector<float> vals(count);
    for (auto& f : vals) f = r.f32();
    c.params.add(name, ad::Tensor::from(shape, std::move(vals)));
  }
  if (r.at != b.size() - 8) throw CorruptCheckpoint("trailing bytes");
  return c;
}

uint64_t param_checksum(const ad::ParameterSet& ps) {
  std::string b;
  for (const auto& [name, t] : ps.items()) {
    put_str(b, name);
    for (int d : t.shape()) put_u32(b, static_cast<uint32_t>(d));
    for (float f : t.values()) put_f32(b, f);
  }
  return fnv1a(b.data(), b.size());
}

}  // namespace taskgrid::ckpt
