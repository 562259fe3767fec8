#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace mrpriv::binio {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
  requires std::is_arithmetic_v<T>
void put(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf{};
  std::memcpy(buf.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  out.write(buf.data(), sizeof(T));
}

template <typename T>
  requires std::is_arithmetic_v<T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> buf{};
  in.read(buf.data(), sizeof(T));
  if (!in) throw FormatError("binary cache: truncated input");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  T value;
  std::memcpy(&value, buf.data(), sizeof(T));
  return value;
}

inline void put_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
  char buf[8] = {};
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0)
    throw FormatError(std::string("binary cache: bad magic, expected ") + magic);
}

}  // namespace mrpriv::binio
