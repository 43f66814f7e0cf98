// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/core/rng.hpp"

namespace flow2gan::dsp {

namespace {

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

void write_header_and_data(const std::string& path, int sample_rate, uint16_t format,
                           uint16_t bits, const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> b;
  const uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * bits / 8;
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + static_cast<uint32_t>(payload.size()));
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, 1);  // mono
  put_u32(b, static_cast<uint32_t>(sample_rate));
  put_u32(b, byte_rate);
  put_u16(b, bits / 8);
  put_u16(b, bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, static_cast<uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace

void write_wav_float32(const std::string& path, const Waveform& wave) {
  std::vector<uint8_t> payload(wave.samples.size() * 4);
  for (size_t i = 0; i < wave.samples.size(); ++i) {
    float v = static_cast<float>(wave.samples[i]);
    uint32_t u;
    std::memcpy(&u, &v, 4);
    payload[4 * i] = u & 0xff;
    payload[4 * i + 1] = (u >> 8) & 0xff;
    payload[4 * i + 2] = (u >> 16) & 0xff;
    payload[4 * i + 3] = (u >> 24) & 0xff;
  }
  write_header_and_data(path, wave.sample_rate, 3, 32, payload);
}

void write_wav_pcm16(const std::string& path, const Waveform& wave, bool dither,
                     uint64_t dither_seed) {
  Rng rng(dither_seed);
  std::vector<uint8_t> payload(wave.samples.size() * 2);
  for (size_t i = 0; i < wave.samples.size(); ++i) {
    double v = std::clamp(wave.samples[i], -1.0, 1.0) * 32767.0;
    if (dither) v += rng.uniform() + rng.uniform() - 1.0;  // TPDF, 1 LSB
    int s = static_cast<int>(std::lrint(v));
    s = std::clamp(s, -32768, 32767);
    payload[2 * i] = static_cast<uint16_t>(s) & 0xff;
    payload[2 * i + 1] = (static_cast<uint16_t>(s) >> 8) & 0xff;
  }
  write_header_and_data(path, wave.sample_rate, 1, 16, payload);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (b.size() < 44 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const uint32_t chunk_len = get_u32(b.data() + pos + 4);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0 && pos + 8 + 16 <= b.size()) {
      format = get_u16(b.data() + pos + 8);
      channels = get_u16(b.data() + pos + 10);
      sample_rate = get_u32(b.data() + pos + 12);
      bits = get_u16(b.data() + pos + 22);
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (data_off == 0 || data_off + data_len > b.size())
    throw IoError("missing or truncated data chunk: " + path);
  if (channels != 1) throw IoError("only mono WAV supported: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  if (format == 1 && bits == 16) {
    const size_t n = data_len / 2;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t s = static_cast<int16_t>(get_u16(b.data() + data_off + 2 * i));
      w.samples[i] = static_cast<double>(s) / 32767.0;
    }
  } else if (format == 3 && bits == 32) {
    const size_t n = data_len / 4;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = get_u32(b.data() + data_off + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      w.samples[i] = static_cast<double>(v);
    }
  } else {
    throw IoError("unsupported WAV format (want 16-bit PCM or 32-bit float): " + path);
  }
  return w;
}

}  // namespace flow2gan::dsp
