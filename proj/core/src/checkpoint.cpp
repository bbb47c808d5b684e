#include "hfsda/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hfsda/errors.hpp"

namespace hfsda::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'F', 'S', 'D', 'A', 'C', 'K', 'P'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end, std::string origin)
      : buf_(buf), end_(end), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(double* dst, std::size_t n) {
    if (n > (end_ - pos_) / sizeof(double)) fail();
    std::memcpy(dst, buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (n > end_ - pos_) fail();
  }
  [[noreturn]] void fail() const { throw CorruptCheckpoint("truncated checkpoint: " + origin_); }

  const std::vector<char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(ckpt.config_hash);
  w.put<std::uint64_t>(ckpt.epoch);
  w.put<std::uint64_t>(ckpt.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.config_text.size()));
  w.bytes(ckpt.config_text.data(), ckpt.config_text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.value.ndim()));
    for (int d : t.value.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.bytes(t.value.data(), t.value.size() * sizeof(double));
  }
  const std::uint64_t sum = fnv1a64(w.buffer().data(), w.buffer().size());
  w.put<std::uint64_t>(sum);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open checkpoint: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  if (buf.size() < sizeof(kMagic) + 8) throw CorruptCheckpoint("truncated checkpoint: " + origin);
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw CorruptCheckpoint("not a checkpoint file (bad magic): " + origin);

  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a64(buf.data(), body))
    throw CorruptCheckpoint("checksum mismatch (truncated or corrupted): " + origin);

  Reader r(buf, body, origin);
  r.str(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw CorruptCheckpoint("unsupported checkpoint format version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint64_t>();
  ckpt.epoch = r.get<std::uint64_t>();
  ckpt.step = r.get<std::uint64_t>();
  ckpt.config_text = r.str(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CorruptCheckpoint("implausible tensor rank in " + origin);
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>();
      if (d > (1ULL << 31)) throw CorruptCheckpoint("implausible tensor dimension in " + origin);
      shape.push_back(static_cast<int>(d));
    }
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    r.doubles(data.data(), n);
    t.value = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos() != body) throw CorruptCheckpoint("trailing bytes in checkpoint: " + origin);
  return ckpt;
}

Checkpoint load(const std::filesystem::path& path, std::uint64_t expected_config_hash) {
  Checkpoint ckpt = load(path);
  if (ckpt.config_hash != expected_config_hash) {
    std::ostringstream os;
    os << "checkpoint " << path.string() << " was written for a different model configuration"
       << " (hash " << std::hex << ckpt.config_hash << ", expected " << expected_config_hash << ")";
    throw IncompatibleCheckpoint(os.str());
  }
  return ckpt;
}

}  // namespace hfsda::checkpoint
