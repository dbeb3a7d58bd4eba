#include "dyna/fft.hpp"

#include <algorithm>

namespace dyna {

namespace {

using Complex = std::complex<double>;

// Unnormalized 2D transform of every (n, c) plane, in place.
void transform_planes(ComplexGrid& z, bool inverse) {
  const Index h = z.height();
  const Index w = z.width();
  Fft1d<double> rows(w);
  Fft1d<double> cols(h);
  std::vector<Complex> column(static_cast<std::size_t>(h));
  for (Index n = 0; n < z.batch(); ++n) {
    for (Index c = 0; c < z.channels(); ++c) {
      Complex* p = z.data() + z.offset(n, c, 0, 0);
      for (Index y = 0; y < h; ++y) rows.transform(p + y * w, inverse);
      for (Index x = 0; x < w; ++x) {
        for (Index y = 0; y < h; ++y) column[static_cast<std::size_t>(y)] = p[y * w + x];
        cols.transform(column.data(), inverse);
        for (Index y = 0; y < h; ++y) p[y * w + x] = column[static_cast<std::size_t>(y)];
      }
    }
  }
}

// Circular shift of each plane by (dy, dx).
ComplexGrid roll(const ComplexGrid& z, Index dy, Index dx) {
  ComplexGrid out(z.shape());
  const Index h = z.height();
  const Index w = z.width();
  for (Index n = 0; n < z.batch(); ++n) {
    for (Index c = 0; c < z.channels(); ++c) {
      for (Index y = 0; y < h; ++y) {
        const Index yy = (y + dy) % h;
        for (Index x = 0; x < w; ++x) out(n, c, yy, (x + dx) % w) = z(n, c, y, x);
      }
    }
  }
  return out;
}

}  // namespace

ComplexGrid fft2_centered(const ComplexGrid& x) {
  if (x.height() < 1 || x.width() < 1) throw ShapeError("fft2_centered: empty grid");
  if (!x.all_finite()) throw NumericError("fft2_centered: non-finite input");
  ComplexGrid z = x;
  transform_planes(z, false);
  return roll(z, spectrum_center(z.height()), spectrum_center(z.width()));
}

ComplexGrid fft2_centered(const RealGrid& x) {
  if (!x.all_finite()) throw NumericError("fft2_centered: non-finite input");
  ComplexGrid z(x.shape());
  z.values() = x.values().cast<Complex>();
  return fft2_centered(z);
}

ComplexGrid ifft2_centered_complex(const ComplexGrid& z) {
  if (z.height() < 1 || z.width() < 1) throw ShapeError("ifft2_centered: empty grid");
  if (!z.all_finite()) throw NumericError("ifft2_centered: non-finite spectrum");
  const Index h = z.height();
  const Index w = z.width();
  ComplexGrid x = roll(z, h - spectrum_center(h), w - spectrum_center(w));
  transform_planes(x, true);
  x.values() /= static_cast<double>(h * w);
  return x;
}

RealGrid ifft2_centered(const ComplexGrid& z, double max_imag) {
  const ComplexGrid x = ifft2_centered_complex(z);
  const double residue = x.size() ? x.values().imag().abs().maxCoeff() : 0.0;
  if (residue > max_imag) {
    throw NumericError("ifft2_centered: imaginary residue " + std::to_string(residue) +
                       " exceeds tolerance; spectrum is not Hermitian");
  }
  return RealGrid(x.shape(), x.values().real());
}

}  // namespace dyna
