// rsan/audio.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "rsan/types.h"

namespace rsan {

namespace {

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t ReadU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::vector<unsigned char>* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back((v >> (8 * i)) & 0xff);
}

void PutU16(std::vector<unsigned char>* out, uint16_t v) {
  out->push_back(v & 0xff);
  out->push_back((v >> 8) & 0xff);
}

}  // namespace

AudioSignal ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(path + ": not a RIFF/WAVE file");

  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    uint32_t size = ReadU32(chunk + 4);
    size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > buf.size())
        throw Error(path + ": truncated fmt chunk");
      uint16_t format = ReadU16(buf.data() + body);
      channels = ReadU16(buf.data() + body + 2);
      rate = static_cast<int>(ReadU32(buf.data() + body + 4));
      bits = ReadU16(buf.data() + body + 14);
      if (format != 1 || bits != 16)
        throw Error(path + ": unsupported encoding (need 16-bit PCM, got format " +
                    std::to_string(format) + ", " + std::to_string(bits) +
                    " bits)");
      if (channels < 1 || channels > 2)
        throw Error(path + ": unsupported channel count " +
                    std::to_string(channels));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(path + ": data chunk before fmt chunk");
      size_t avail = std::min<size_t>(size, buf.size() - body);
      Eigen::Index frames = static_cast<Eigen::Index>(avail / (2 * channels));
      AudioSignal out(rate, frames, channels);
      const unsigned char* p = buf.data() + body;
      for (Eigen::Index n = 0; n < frames; ++n) {
        for (int c = 0; c < channels; ++c) {
          int16_t v = static_cast<int16_t>(ReadU16(p));
          out.samples(n, c) = v / 32768.0;
          p += 2;
        }
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw Error(path + ": no data chunk");
}

void WriteWav(const std::string& path, const AudioSignal& signal) {
  const auto channels = static_cast<uint16_t>(signal.channels());
  if (channels < 1 || channels > 2)
    throw Error("WriteWav: unsupported channel count " +
                std::to_string(channels));
  const uint32_t data_bytes =
      static_cast<uint32_t>(signal.length() * channels * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  PutU32(&out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutU32(&out, 16);
  PutU16(&out, 1);
  PutU16(&out, channels);
  PutU32(&out, static_cast<uint32_t>(signal.sample_rate));
  PutU32(&out, static_cast<uint32_t>(signal.sample_rate) * channels * 2);
  PutU16(&out, static_cast<uint16_t>(channels * 2));
  PutU16(&out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  PutU32(&out, data_bytes);
  for (Eigen::Index n = 0; n < signal.length(); ++n) {
    for (int c = 0; c < channels; ++c) {
      const long v = std::clamp(std::lround(signal.samples(n, c) * 32768.0), -32768L, 32767L);
      PutU16(&out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("write failed: " + path);
}

}  // namespace rsan
