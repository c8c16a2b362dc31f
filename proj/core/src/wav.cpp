#include "msnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace msnet {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

[[noreturn]] void fail(const std::string& path, const std::string& reason) {
  throw std::runtime_error("cannot read WAV '" + path + "': " + reason);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44) fail(path, "file too small for a WAV header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(path, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail(path, "truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) fail(path, "fmt chunk too small");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      sample_rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible && size >= 40) {
        format = le16(bytes.data() + body + 24);  // sub-format GUID head
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }

  if (channels == 0 || sample_rate == 0) fail(path, "missing fmt chunk");
  if (data == nullptr || data_size == 0) fail(path, "missing audio data");
  const bool ok = (format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32)) ||
                  (format == kFormatFloat && bits == 32);
  if (!ok) fail(path, "unsupported sample format (need 16/24/32-bit PCM or 32-bit float)");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t num_frames = data_size / frame_bytes;

  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(num_frames);
  for (std::size_t f = 0; f < num_frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (format == kFormatFloat) {
        float fv;
        std::memcpy(&fv, p, 4);
        v = fv;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = (p[0] << 8) | (p[1] << 16) |
                         (static_cast<std::int32_t>(p[2]) << 24);
        v = (s >> 8) / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[f] = std::clamp(acc / channels, -1.0, 1.0);
  }
  return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples,
               double sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const std::uint32_t sr = static_cast<std::uint32_t>(std::lround(sample_rate));
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  const auto u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  const auto u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
  };
  os.write("RIFF", 4);
  u32(36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(kFormatPcm);
  u16(1);
  u32(sr);
  u32(sr * 2);
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(data_size);
  for (double s : samples) {
    // same 32768 scale the reader divides by, so the round trip only loses
    // half a quantization step
    const long q = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<double> resample(const std::vector<double>& input, double src_rate,
                             double dst_rate) {
  if (src_rate == dst_rate || input.empty()) return input;
  constexpr int kZeroCrossings = 32;
  const double ratio = dst_rate / src_rate;
  // When downsampling, the sinc cutoff moves down to the output Nyquist.
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto out_len =
      static_cast<std::size_t>(std::floor(input.size() * ratio));
  std::vector<double> out(out_len);
  const long n = static_cast<long>(input.size());
  for (std::size_t j = 0; j < out_len; ++j) {
    const double center = j / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min(n - 1, static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double x = (i - center) * cutoff;
      double sinc = 1.0;
      if (x != 0.0) {
        sinc = std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      }
      const double w =
          0.5 * (1.0 + std::cos(std::numbers::pi * (i - center) / half_width));
      acc += input[i] * sinc * cutoff * w;
    }
    out[j] = acc;
  }
  return out;
}

std::vector<double> load_audio(const std::string& path, double target_rate) {
  AudioBuffer buf = read_wav(path);
  if (buf.samples.empty()) {
    throw std::runtime_error("audio too short: " + path);
  }
  return resample(buf.samples, buf.sample_rate, target_rate);
}

}  // namespace msnet
