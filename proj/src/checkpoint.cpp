#include "triseg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "triseg/pnm.hpp"

namespace triseg {

const char* to_string(CheckpointErrc c) {
  switch (c) {
    case CheckpointErrc::io: return "io";
    case CheckpointErrc::bad_magic: return "bad magic";
    case CheckpointErrc::unsupported_version: return "unsupported version";
    case CheckpointErrc::truncated: return "truncated";
    case CheckpointErrc::fingerprint_mismatch: return "fingerprint mismatch";
    case CheckpointErrc::corrupt: return "corrupt";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'E', 'G'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrc::truncated,
                            std::string("file ends inside ") + what + " at byte " + std::to_string(pos_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TriChannelNet<float>& net, const CheckpointMeta& meta) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  const auto fp = net.fingerprint();
  w.u32(fp.input_size);
  w.u32(static_cast<std::uint32_t>(fp.layers.size()));
  for (const auto& l : fp.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(l.filters);
    w.u32(l.kernel_h);
    w.u32(l.kernel_w);
    w.u32(l.in_channels);
    w.u32(l.factor);
  }
  w.u32(static_cast<std::uint32_t>(kParamLayerCount));
  for (const auto& p : net.params()) {
    w.u64(p.weights.size());
    for (float v : p.weights) w.f32(v);
    w.u64(p.bias.size());
    for (float v : p.bias) w.f32(v);
  }
  w.u32(meta.epoch);
  w.f64(meta.best_test_iou);
  w.u64(meta.seed);
  w.u32(static_cast<std::uint32_t>(meta.config_json.size()));
  w.raw(meta.config_json.data(), meta.config_json.size());
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<Fingerprint>& expected) {
  if (bytes.size() < 4) throw CheckpointError(CheckpointErrc::truncated, "file shorter than the magic bytes");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrc::bad_magic, "not a TSEG checkpoint");
  Reader r(bytes);
  r.str(4, "magic");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrc::unsupported_version, "version " + std::to_string(version));

  Fingerprint stored;
  stored.input_size = r.u32("fingerprint");
  const auto n_layers = r.u32("fingerprint");
  if (n_layers > 4096) throw CheckpointError(CheckpointErrc::corrupt, "implausible layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(r.u8("fingerprint"));
    l.filters = r.u32("fingerprint");
    l.kernel_h = r.u32("fingerprint");
    l.kernel_w = r.u32("fingerprint");
    l.in_channels = r.u32("fingerprint");
    l.factor = r.u32("fingerprint");
    stored.layers.push_back(l);
  }
  const Fingerprint want = expected ? *expected : TriChannelNet<float>::zeros(kInputSize).fingerprint();
  if (!(stored == want))
    throw CheckpointError(CheckpointErrc::fingerprint_mismatch,
                          "checkpoint architecture [" + stored.str() + "] does not match [" + want.str() + "]");

  auto net = TriChannelNet<float>::zeros(stored.input_size);
  if (!(net.fingerprint() == stored))
    throw CheckpointError(CheckpointErrc::fingerprint_mismatch, "fingerprint is not a buildable architecture");
  const auto n_params = r.u32("parameter table");
  if (n_params != kParamLayerCount) throw CheckpointError(CheckpointErrc::corrupt, "parameter layer count");
  auto& params = net.mutable_params();
  for (auto& p : params) {
    const auto nw = r.u64("weights");
    if (nw != p.weights.size()) throw CheckpointError(CheckpointErrc::corrupt, "weight buffer length");
    r.need(nw * 4, "weights");
    for (auto& v : p.weights) v = r.f32("weights");
    const auto nb = r.u64("bias");
    if (nb != p.bias.size()) throw CheckpointError(CheckpointErrc::corrupt, "bias buffer length");
    r.need(nb * 4, "bias");
    for (auto& v : p.bias) v = r.f32("bias");
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(p.weights.begin(), p.weights.end(), finite) || !std::all_of(p.bias.begin(), p.bias.end(), finite))
      throw CheckpointError(CheckpointErrc::corrupt, "non-finite parameter");
  }
  CheckpointMeta meta;
  meta.epoch = r.u32("metadata");
  meta.best_test_iou = r.f64("metadata");
  meta.seed = r.u64("metadata");
  const auto len = r.u32("metadata");
  meta.config_json = r.str(len, "config echo");
  if (!r.at_end())
    throw CheckpointError(CheckpointErrc::corrupt, std::to_string(r.remaining()) + " trailing bytes");
  return Checkpoint{std::move(net), std::move(meta)};
}

void save_checkpoint(const TriChannelNet<float>& net, const CheckpointMeta& meta, const std::filesystem::path& path) {
  try {
    write_file(path, encode_checkpoint(net, meta));
  } catch (const CheckpointError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(CheckpointErrc::io, e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<Fingerprint>& expected) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(CheckpointErrc::io, e.what());
  }
  return decode_checkpoint(bytes, expected);
}

}  // namespace triseg
