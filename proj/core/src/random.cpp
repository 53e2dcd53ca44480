#include "cdpf/random.hpp"

namespace cdpf {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose, std::uint64_t step,
                          std::uint64_t index) noexcept {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  h = mix64(h ^ step);
  return mix64(h ^ index);
}

Rng make_stream(std::uint64_t master, StreamPurpose purpose, std::uint64_t step,
                std::uint64_t index) {
  return Rng(derive_seed(master, purpose, step, index));
}

Vector standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace cdpf
