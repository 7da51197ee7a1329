#include "avse/neural/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "avse/error.hpp"

namespace avse::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error("cannot write checkpoint: " + path.string());
  }
  template <class T>
  void pod(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void ints(const std::vector<int>& v) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
    for (int x : v) pod<std::int32_t>(x);
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw Error("failed writing checkpoint: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error("cannot open checkpoint: " + path.string());
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::vector<int> ints() {
    const auto n = pod<std::uint32_t>();
    if (n > 64) fail("implausible list length");
    std::vector<int> v(n);
    for (auto& x : v) x = pod<std::int32_t>();
    return v;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) fail("implausible vector length");
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    check();
  }
  [[noreturn]] void fail(const std::string& what) { throw Error("corrupt checkpoint " + path_.string() + ": " + what); }

 private:
  void check() {
    if (!in_) fail("unexpected end of file");
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.raw("AVSE1", 5);
  w.pod<std::uint32_t>(kCheckpointConfigVersion);
  const ModelConfig& c = ckpt.config;
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.mode));
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.audio_encoder));
  w.ints(c.conv_channels);
  w.ints(c.video_linear_widths);
  w.ints(c.audio_widths);
  w.ints(c.predictor_widths);
  w.pod<std::int32_t>(c.output_bins);
  w.pod<std::int32_t>(c.output_frames);
  w.pod<std::uint64_t>(c.seed);
  w.pod<double>(c.scale_factor);
  w.pod<std::uint8_t>(c.log_compress ? 1 : 0);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(ckpt.loss_kind));
  w.pod<double>(ckpt.alpha);
  w.doubles(ckpt.params);
  w.doubles(ckpt.adam.m);
  w.doubles(ckpt.adam.v);
  w.pod<std::uint64_t>(ckpt.adam.step);
  w.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[5];
  r.raw(magic, 5);
  if (std::memcmp(magic, "AVSE1", 5) != 0) r.fail("bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointConfigVersion) r.fail("unsupported config version " + std::to_string(version));

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  const auto mode = r.pod<std::uint8_t>();
  const auto enc = r.pod<std::uint8_t>();
  if (mode > 1 || enc > 1) r.fail("bad mode or encoder kind");
  c.mode = static_cast<Mode>(mode);
  c.audio_encoder = static_cast<AudioEncoderKind>(enc);
  c.conv_channels = r.ints();
  c.video_linear_widths = r.ints();
  c.audio_widths = r.ints();
  c.predictor_widths = r.ints();
  c.output_bins = r.pod<std::int32_t>();
  c.output_frames = r.pod<std::int32_t>();
  c.seed = r.pod<std::uint64_t>();
  c.scale_factor = r.pod<double>();
  c.log_compress = r.pod<std::uint8_t>() != 0;
  const auto loss = r.pod<std::uint8_t>();
  if (loss > 2) r.fail("bad loss kind");
  ckpt.loss_kind = static_cast<LossKind>(loss);
  ckpt.alpha = r.pod<double>();
  ckpt.params = r.doubles();
  ckpt.adam.m = r.doubles();
  ckpt.adam.v = r.doubles();
  ckpt.adam.step = r.pod<std::uint64_t>();
  return ckpt;
}

Checkpoint make_checkpoint(const Network& net, LossKind loss, double alpha, const AdamState& adam) {
  Checkpoint c{net.config(), loss, alpha, net.params().values, adam};
  c.adam.step = std::max(adam.step, net.optimizer_steps());
  return c;
}

Network network_from(const Checkpoint& ckpt) {
  ModelParams p;
  p.values = ckpt.params;
  Network net(ckpt.config, std::move(p));
  net.set_optimizer_steps(ckpt.adam.step);
  return net;
}

}  // namespace avse::nn
