#include "flusense/common/rng.hpp"

#include <cmath>
#include <numbers>

namespace flusense {

Rng Rng::Split(std::string_view name) const {
  // FNV-1a over the name, then mixed with the parent key.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  Rng child;
  child.key_ = Mix(key_ ^ Mix(h));
  return child;
}

Rng Rng::Split(std::uint64_t index) const {
  Rng child;
  child.key_ = Mix(key_ ^ Mix(index + 0x51ed270b27a3c9d1ULL));
  return child;
}

double Rng::Uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::UniformInt(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return lo;
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection sampling keeps the distribution exactly uniform.
  const std::uint64_t limit = max() - max() % span;
  std::uint64_t draw = NextU64();
  while (draw >= limit) draw = NextU64();
  return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::Normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

std::int64_t Rng::Poisson(double mean) {
  if (mean <= 0.0) return 0;
  if (mean > 30.0) {
    const double draw = std::round(Normal(mean, std::sqrt(mean)));
    return draw < 0.0 ? 0 : static_cast<std::int64_t>(draw);
  }
  // Knuth's multiplication method.
  const double limit = std::exp(-mean);
  std::int64_t k = 0;
  double product = Uniform();
  while (product > limit) {
    ++k;
    product *= Uniform();
  }
  return k;
}

std::int64_t Rng::Geometric(double p) {
  if (p >= 1.0) return 1;
  double u = Uniform();
  while (u <= 0.0) u = Uniform();
  return 1 + static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace flusense
