#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace deqn::util {

std::string base64_encode(std::span<const double> values);
// Throws std::runtime_error on malformed input.
std::vector<double> base64_decode_doubles(const std::string& text);

// 17-significant-digit decimal, round-trips a double exactly.
std::string format_g17(double v);

}  // namespace deqn::util
