#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "simpsi/rng.hpp"

namespace testutil {

// O(L^2) reference DFT at double precision; sign=-1 forward, +1 inverse
// (inverse here is unscaled, divide by L at the call site if needed).
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x, int sign = -1) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> out(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (int t = 0; t < n; ++t) {
      const double angle = sign * 2.0 * M_PI *
                           static_cast<double>(static_cast<long long>(k) * t % n) / n;
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<float> random_signal(simpsi::rng::RngStream& rng, int n,
                                        float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.uniform(lo, hi));
  return x;
}

}  // namespace testutil
