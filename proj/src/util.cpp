#include "deqn/util.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace deqn::util {

namespace {
constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(std::span<const double> values) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  const std::size_t n = values.size() * sizeof(double);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    const unsigned b0 = bytes[i];
    const unsigned b1 = i + 1 < n ? bytes[i + 1] : 0;
    const unsigned b2 = i + 2 < n ? bytes[i + 2] : 0;
    out += kAlphabet[b0 >> 2];
    out += kAlphabet[((b0 & 0x3) << 4) | (b1 >> 4)];
    out += i + 1 < n ? kAlphabet[((b1 & 0xF) << 2) | (b2 >> 6)] : '=';
    out += i + 2 < n ? kAlphabet[b2 & 0x3F] : '=';
  }
  return out;
}

std::vector<double> base64_decode_doubles(const std::string& text) {
  if (text.size() % 4 != 0)
    throw std::runtime_error("base64: length not a multiple of 4");
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2)
          throw std::runtime_error("base64: bad padding");
        v[k] = 0;
        ++pad;
      } else {
        v[k] = decode_char(c);
        if (v[k] < 0) throw std::runtime_error("base64: bad character");
        if (pad) throw std::runtime_error("base64: data after padding");
      }
    }
    bytes.push_back(static_cast<unsigned char>((v[0] << 2) | (v[1] >> 4)));
    if (pad < 2)
      bytes.push_back(static_cast<unsigned char>((v[1] << 4) | (v[2] >> 2)));
    if (pad < 1)
      bytes.push_back(static_cast<unsigned char>((v[2] << 6) | v[3]));
  }
  if (bytes.size() % sizeof(double) != 0)
    throw std::runtime_error("base64: payload is not a whole number of doubles");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace deqn::util
