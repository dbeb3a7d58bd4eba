#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dyna/tensor.hpp"

namespace dyna {

// One-dimensional DFT of arbitrary length. Powers of two use an iterative
// radix-2 transform; every other length goes through Bluestein's chirp-z
// identity on a padded power-of-two convolution.
template <typename Real>
class Fft1d {
 public:
  using Complex = std::complex<Real>;

  explicit Fft1d(Index n) : n_(n) {
    if (n < 1) throw ShapeError("FFT length must be positive");
    if (is_pow2(n)) {
      init_radix2(n, twiddle_);
    } else {
      m_ = 1;
      while (m_ < 2 * n - 1) m_ <<= 1;
      init_radix2(m_, twiddle_);
      chirp_.resize(static_cast<std::size_t>(n));
      for (Index k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small.
        const auto k2 = static_cast<long double>((k * k) % (2 * n));
        const Real angle = static_cast<Real>(-std::numbers::pi_v<long double> * k2 / static_cast<long double>(n));
        chirp_[static_cast<std::size_t>(k)] = Complex(std::cos(angle), std::sin(angle));
      }
      kernel_.assign(static_cast<std::size_t>(m_), Complex(0));
      kernel_[0] = std::conj(chirp_[0]);
      for (Index k = 1; k < n; ++k) {
        kernel_[static_cast<std::size_t>(k)] = std::conj(chirp_[static_cast<std::size_t>(k)]);
        kernel_[static_cast<std::size_t>(m_ - k)] = std::conj(chirp_[static_cast<std::size_t>(k)]);
      }
      radix2(kernel_.data(), m_, twiddle_, false);
      scratch_.resize(static_cast<std::size_t>(m_));
    }
  }

  Index size() const { return n_; }

  // In-place unnormalized transform. inverse = true uses the +i exponent.
  void transform(Complex* data, bool inverse) {
    if (m_ == 0) {
      radix2(data, n_, twiddle_, inverse);
      return;
    }
    if (inverse) {
      for (Index k = 0; k < n_; ++k) data[k] = std::conj(data[k]);
    }
    std::fill(scratch_.begin(), scratch_.end(), Complex(0));
    for (Index k = 0; k < n_; ++k) scratch_[static_cast<std::size_t>(k)] = data[k] * chirp_[static_cast<std::size_t>(k)];
    radix2(scratch_.data(), m_, twiddle_, false);
    for (Index k = 0; k < m_; ++k) scratch_[static_cast<std::size_t>(k)] *= kernel_[static_cast<std::size_t>(k)];
    radix2(scratch_.data(), m_, twiddle_, true);
    const Real scale = Real(1) / static_cast<Real>(m_);
    for (Index k = 0; k < n_; ++k) {
      data[k] = scratch_[static_cast<std::size_t>(k)] * chirp_[static_cast<std::size_t>(k)] * scale;
    }
    if (inverse) {
      for (Index k = 0; k < n_; ++k) data[k] = std::conj(data[k]);
    }
  }

 private:
  static bool is_pow2(Index n) { return (n & (n - 1)) == 0; }

  static void init_radix2(Index n, std::vector<Complex>& tw) {
    tw.resize(static_cast<std::size_t>(n / 2 + 1));
    for (Index k = 0; k <= n / 2; ++k) {
      const Real angle = static_cast<Real>(-2.0L * std::numbers::pi_v<long double> * k / n);
      tw[static_cast<std::size_t>(k)] = Complex(std::cos(angle), std::sin(angle));
    }
  }

  static void radix2(Complex* a, Index n, const std::vector<Complex>& tw, bool inverse) {
    for (Index i = 1, j = 0; i < n; ++i) {
      Index bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (Index len = 2; len <= n; len <<= 1) {
      const Index step = n / len;
      for (Index i = 0; i < n; i += len) {
        for (Index k = 0; k < len / 2; ++k) {
          Complex w = tw[static_cast<std::size_t>(k * step)];
          if (inverse) w = std::conj(w);
          const Complex u = a[i + k];
          const Complex v = a[i + k + len / 2] * w;
          a[i + k] = u + v;
          a[i + k + len / 2] = u - v;
        }
      }
    }
  }

  Index n_;
  Index m_ = 0;
  std::vector<Complex> twiddle_;
  std::vector<Complex> chirp_;
  std::vector<Complex> kernel_;
  std::vector<Complex> scratch_;
};

// Index of the zero-frequency bin along an axis of the centered spectrum.
constexpr Index spectrum_center(Index dim) { return dim / 2; }

// Centered index of the bin holding the negated frequency.
constexpr Index mirror_bin(Index u, Index dim) {
  const Index c = spectrum_center(dim);
  return ((2 * c - u) % dim + dim) % dim;
}

// Per-channel 2D DFT with the zero-frequency bin moved to (floor(H/2), floor(W/2)).
ComplexGrid fft2_centered(const RealGrid& x);

// Same transform on complex input (no finiteness check beyond NumericError on NaN/Inf).
ComplexGrid fft2_centered(const ComplexGrid& x);

// Inverse of fft2_centered including the 1/(HW) normalization. Throws
// NumericError when the result carries an imaginary residue above
// max_imag, i.e. the spectrum was not that of a real image.
RealGrid ifft2_centered(const ComplexGrid& z, double max_imag = 1e-6);

// Inverse without the realness check.
ComplexGrid ifft2_centered_complex(const ComplexGrid& z);

}  // namespace dyna
