#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ccat/error.hpp"

namespace ccat::frontend {

inline constexpr int kTargetSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = kTargetSampleRate;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

inline void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw ParseError("sample rate must be positive");
  if (w.samples.empty()) throw ParseError("waveform has no samples");
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw ParseError("waveform contains a non-finite sample");
  }
}

/// Linear-interpolation resampler. Output length is floor((n-1)*to/from)+1,
/// so both endpoints of the input are kept.
inline Waveform resample_linear(const Waveform& w, int to_rate) {
  validate(w);
  if (to_rate <= 0) throw ParseError("target sample rate must be positive");
  if (w.sample_rate == to_rate) return w;
  const std::size_t n = w.samples.size();
  const double ratio = static_cast<double>(w.sample_rate) / to_rate;
  // (n-1)*to/from computed in integers to keep the length formula exact.
  const auto out_len = static_cast<std::size_t>(
      (static_cast<std::uint64_t>(n - 1) * static_cast<std::uint64_t>(to_rate)) /
          static_cast<std::uint64_t>(w.sample_rate) +
      1);
  Waveform out;
  out.sample_rate = to_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) {
      out.samples[i] = w.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = w.samples[lo] + frac * (w.samples[lo + 1] - w.samples[lo]);
  }
  return out;
}

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Decodes an in-memory RIFF/WAVE image. PCM16 and IEEE float32 are accepted;
/// channels are averaged and the result is resampled to 16 kHz.
inline Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("missing RIFF/WAVE header");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + len > bytes.size()) throw ParseError("truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        // WAVE_FORMAT_EXTENSIBLE: the real format tag leads the subformat GUID.
        if (len < 40) throw ParseError("truncated extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers sometimes leave the length at 0 or 0xFFFFFFFF.
      data_len = std::min<std::size_t>(len, bytes.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw ParseError("missing fmt chunk");
  if (data == nullptr) throw ParseError("missing data chunk");
  if (channels == 0) throw ParseError("zero channels");
  if (rate == 0) throw ParseError("zero sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw UnsupportedFormat("format tag " + std::to_string(format) + " with " +
                            std::to_string(bits) + " bits per sample");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw ParseError("data chunk holds no complete frames");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        std::uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, sizeof v);
        acc += v;
      }
    }
    w.samples[i] = acc / channels;
  }
  validate(w);
  return resample_linear(w, kTargetSampleRate);
}

inline Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

enum class SampleFormat { kPcm16, kFloat32 };

/// Encodes interleaved frames (channels samples per frame). PCM16 clips to
/// [-1, 1) before quantising.
inline std::vector<std::uint8_t> encode_wav(std::span<const double> interleaved, int channels,
                                            int sample_rate,
                                            SampleFormat fmt = SampleFormat::kPcm16) {
  using detail::put_u16;
  using detail::put_u32;
  const std::uint16_t bits = fmt == SampleFormat::kPcm16 ? 16 : 32;
  const auto data_len = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, fmt == SampleFormat::kPcm16 ? 1 : 3);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * (bits / 8)));
  put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double s : interleaved) {
    if (fmt == SampleFormat::kPcm16) {
      const double q = std::round(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      const auto f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w,
                      SampleFormat fmt = SampleFormat::kPcm16) {
  const auto bytes = encode_wav(w.samples, 1, w.sample_rate, fmt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ccat::frontend
