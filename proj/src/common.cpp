#include "ddace/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace ddace {

double Rng::normal() {
  // Box-Muller; u1 kept away from 0 so log stays finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Rng Rng::fork(std::uint64_t stream) const {
  Rng child(state_ ^ (0xa0761d6478bd642fULL * (stream + 1)));
  child.next_u64();
  return child;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw InputError("bad number '" + s + "' in " + context);
  }
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw InputError("bad integer '" + s + "' in " + context);
  }
  return v;
}

}  // namespace ddace
