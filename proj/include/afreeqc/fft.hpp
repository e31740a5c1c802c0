#pragma once

#include <complex>
#include <span>
#include <vector>

namespace afreeqc::fft {

using Complex = std::complex<double>;

/// In-place unnormalized multidimensional DFT over a row-major array with the
/// given extents (axis 0 slowest). forward: exp(-2 pi i k j / N).
void transform(std::span<const int> dims, std::span<Complex> data, bool forward);

}  // namespace afreeqc::fft
