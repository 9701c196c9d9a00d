#include "mapf/common.hpp"

#include <cstdio>

namespace mapf {

int action_between(Cell a, Cell b) {
  for (int k = 0; k < kNumActions; ++k) {
    if (apply_action(a, k) == b) return k;
  }
  return -1;
}

std::string_view action_name(int action) {
  static constexpr std::array<std::string_view, kNumActions> kNames = {
      "up", "down", "left", "right", "stay"};
  if (action < 0 || action >= kNumActions) return "invalid";
  return kNames[action];
}

void Fnv1a::add(std::string_view bytes) {
  for (unsigned char c : bytes) {
    h_ ^= c;
    h_ *= 1099511628211ULL;
  }
}

void Fnv1a::add_int(std::int64_t v) {
  for (int i = 0; i < 8; ++i) {
    h_ ^= static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    h_ *= 1099511628211ULL;
  }
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h_));
  return buf;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix(base);
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

}  // namespace mapf
