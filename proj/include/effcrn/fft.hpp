// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <vector>

namespace effcrn {

// In-place iterative radix-2 FFT; size must be a power of two. The inverse
// transform includes the 1/N factor.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace effcrn
