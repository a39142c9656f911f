#include "crskit/weights.h"

#include <bit>
#include <cstring>
#include <set>

#include "crskit/error.h"

namespace crskit {
namespace {

constexpr char kMagic[4] = {'R', 'W', 'Z', 'W'};
constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::kTruncatedFile, "weights file ends at byte " + std::to_string(bytes_.size()));
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T le() {
    auto raw = take(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    return static_cast<T>(v);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const Tensor* WeightsFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Tensor& WeightsFile::at(const std::string& name) const {
  const auto* t = find(name);
  if (!t) fail(ErrorCode::kMalformedWeights, "missing tensor " + name);
  return *t;
}

std::string serialize_weights(const WeightsFile& w) {
  std::set<std::string> names;
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kWeightsVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto& t : w.tensors) {
    if (!names.insert(t.name).second) {
      fail(ErrorCode::kMalformedWeights, "duplicate tensor name " + t.name);
    }
    if (t.element_count() != t.data.size() || t.shape.size() > 255) {
      fail(ErrorCode::kMalformedWeights, "tensor " + t.name + " shape does not match data");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(t.shape.size()));
    for (auto d : t.shape) put_le<std::uint64_t>(out, d);
    for (float f : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

WeightsFile deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, "not a weights file");
  }
  r.take(4);
  auto version = r.le<std::uint32_t>();
  if (version != kWeightsVersion) {
    fail(ErrorCode::kUnsupportedVersion, "weights version " + std::to_string(version));
  }
  auto count = r.le<std::uint32_t>();

  WeightsFile w;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    auto name_len = r.le<std::uint32_t>();
    auto name = r.take(name_len);
    t.name.assign(name.begin(), name.end());
    if (!names.insert(t.name).second) {
      fail(ErrorCode::kMalformedWeights, "duplicate tensor name " + t.name);
    }
    auto dtype = r.le<std::uint8_t>();
    if (dtype != kDtypeF32) {
      fail(ErrorCode::kMalformedWeights, "unsupported dtype " + std::to_string(dtype));
    }
    auto rank = r.le<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.le<std::uint64_t>());
    auto n = t.element_count();
    // Guard the allocation against a corrupt shape before reading data.
    if (n > (bytes.size() / 4)) fail(ErrorCode::kTruncatedFile, "tensor " + t.name + " data truncated");
    t.data.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) t.data.push_back(std::bit_cast<float>(r.le<std::uint32_t>()));
    w.tensors.push_back(std::move(t));
  }
  if (!r.done()) fail(ErrorCode::kMalformedWeights, "trailing bytes after last tensor");
  return w;
}

WeightsFile deserialize_weights(const std::string& bytes) {
  return deserialize_weights(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

}  // namespace crskit
