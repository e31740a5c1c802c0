#pragma once

#include "afreeqc/fields.hpp"
#include "afreeqc/symbol.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace testutil {

inline constexpr double pi = std::numbers::pi;

inline afreeqc::Vector random_unit(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  afreeqc::Vector v(n);
  do {
    for (int i = 0; i < n; ++i) v[i] = g(rng);
  } while (v.norm() < 1e-6);
  return v / v.norm();
}

/// Random trigonometric polynomial with frequencies |xi_a| <= kmax, mean zero.
inline afreeqc::PeriodicField random_field(int n, int m, int N, std::uint64_t seed, int kmax = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> f(-kmax, kmax);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * pi);
  struct Mode {
    std::vector<int> k;
    double phase;
    std::vector<double> amp;
  };
  std::vector<Mode> modes(10);
  for (auto& md : modes) {
    bool zero = true;
    for (int a = 0; a < n; ++a) {
      md.k.push_back(f(rng));
      zero = zero && md.k.back() == 0;
    }
    if (zero) md.k[0] = 1;
    md.phase = ph(rng);
    for (int c = 0; c < m; ++c) md.amp.push_back(g(rng));
  }
  return afreeqc::PeriodicField::from_function(
      afreeqc::GridSpec::unit_cube(n, N), m, [&](std::span<const double> x, std::span<double> out) {
        for (auto& o : out) o = 0.0;
        for (const auto& md : modes) {
          double arg = md.phase;
          for (int a = 0; a < n; ++a) arg += 2.0 * pi * md.k[a] * x[a];
          for (int c = 0; c < m; ++c) out[c] += md.amp[c] * std::cos(arg);
        }
      });
}

inline double l2_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double l2(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

}  // namespace testutil
