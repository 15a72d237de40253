#pragma once

#include <complex>
#include <span>
#include <vector>

namespace aqualoc::dsp {

using Complex = std::complex<double>;

/// Forward DFT, no scaling.
std::vector<Complex> fft(std::span<const Complex> input);
std::vector<Complex> fft(std::span<const double> input);

/// Inverse DFT scaled by 1/N.
std::vector<Complex> ifft(std::span<const Complex> input);

}  // namespace aqualoc::dsp
