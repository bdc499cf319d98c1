// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <vector>

#include "avattn/audio_io.hpp"
#include "avattn/error.hpp"

namespace avattn {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void PutLe(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void PutTag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, fmt::format("wav: cannot open {}", path.string()));
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  const auto bad = [&](const std::string& why) {
    Fail(ErrorKind::kParse, fmt::format("wav: {}: {}", path.string(), why));
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    bad("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = ReadLe<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) bad("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) bad("short fmt chunk");
      format = ReadLe<std::uint16_t>(chunk + 8);
      channels = ReadLe<std::uint16_t>(chunk + 10);
      rate = ReadLe<std::uint32_t>(chunk + 12);
      bits = ReadLe<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) bad("short extensible fmt chunk");
        format = ReadLe<std::uint16_t>(chunk + 32);  // first two bytes of the sub-format GUID
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || rate == 0) bad("missing fmt chunk");
  if (data == nullptr) bad("missing data chunk");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) bad(fmt::format("unsupported encoding (format {}, {} bits)", format, bits));

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * (bits / 8);
      acc += pcm16 ? ReadLe<std::int16_t>(p) / 32768.0 : static_cast<double>(ReadLe<float>(p));
    }
    clip.samples[i] = acc / channels;
  }
  ValidateClip(clip);
  return clip;
}

void WriteWav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  ValidateClip(clip);
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  PutTag(out, "RIFF");
  PutLe<std::uint32_t>(out, 36 + data_size);
  PutTag(out, "WAVE");
  PutTag(out, "fmt ");
  PutLe<std::uint32_t>(out, 16);
  PutLe<std::uint16_t>(out, format);
  PutLe<std::uint16_t>(out, 1);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  PutLe<std::uint16_t>(out, bits / 8);
  PutLe<std::uint16_t>(out, bits);
  PutTag(out, "data");
  PutLe<std::uint32_t>(out, data_size);
  for (double s : clip.samples) {
    if (encoding == WavEncoding::kPcm16) {
      const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
      PutLe<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clamped * 32768.0)));
    } else {
      PutLe<float>(out, static_cast<float>(s));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) Fail(ErrorKind::kIo, fmt::format("wav: cannot write {}", path.string()));
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace avattn
