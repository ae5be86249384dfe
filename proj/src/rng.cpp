#include "pimoe/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pimoe/error.hpp"

namespace pimoe {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  require(n > 0, ErrorCode::InvalidArgument, "Rng::index requires n > 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << has_spare_ << ' ';
  out.precision(17);
  out << std::hexfloat << spare_normal_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  std::string spare_text;
  in >> engine_ >> has_spare_ >> spare_text;
  require(!in.fail(), ErrorCode::InvalidArgument, "corrupt RNG state");
  spare_normal_ = std::strtod(spare_text.c_str(), nullptr);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  // splitmix64 finalizer over the xor-folded pair
  std::uint64_t z = seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng derive_stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return Rng(hash_combine(hash_combine(seed, hash_string(name)), index));
}

}  // namespace pimoe
