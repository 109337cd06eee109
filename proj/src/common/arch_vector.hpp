#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bayesft {

// Per-slot dropout rates being searched. Rates live in [0, kMaxDropoutRate].
struct ArchVector {
  std::vector<double> rates;

  ArchVector() = default;
  explicit ArchVector(std::vector<double> r) : rates(std::move(r)) {}
  static ArchVector zeros(std::size_t dim) { return ArchVector(std::vector<double>(dim, 0.0)); }

  std::size_t size() const { return rates.size(); }
  double operator[](std::size_t i) const { return rates[i]; }
  double& operator[](std::size_t i) { return rates[i]; }
  std::span<const double> span() const { return rates; }

  friend bool operator==(const ArchVector&, const ArchVector&) = default;
};

inline constexpr double kMaxDropoutRate = 0.9;

}  // namespace bayesft
