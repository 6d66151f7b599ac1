#pragma once

// Butterworth design via the bilinear transform, second-order-section
// filtering with steady-state initial conditions, zero-phase filtfilt, and a
// windowed-sinc resampler.

#include "deaps/core.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace deaps::dsp {

/// One biquad: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

enum class Band { Lowpass, Highpass };

/// Digital Butterworth filter of the given order as cascaded biquads.
inline Sos butterworth(int order, double cutoff_hz, double fs, Band band) {
  require(order >= 1, "filter order must be positive");
  require(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0, "cutoff must lie in (0, fs/2)");
  using C = std::complex<double>;
  const double pi = std::numbers::pi;
  const double k2 = 2.0 * fs;
  const double warped = k2 * std::tan(pi * cutoff_hz / fs);

  // Analog prototype poles in the left half plane, scaled to the warped cutoff.
  std::vector<C> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
    const C p = std::polar(1.0, theta);
    poles.push_back(band == Band::Lowpass ? warped * p : warped / p);
  }
  // Zeros: at infinity (lowpass) or at s = 0 (highpass). Bilinear maps them to
  // z = -1 and z = +1 respectively.
  const double zero_z = band == Band::Lowpass ? -1.0 : 1.0;

  std::vector<C> zpoles;
  for (const C& p : poles) zpoles.push_back((k2 + p) / (k2 - p));

  Sos sos;
  std::vector<bool> used(zpoles.size(), false);
  for (std::size_t k = 0; k < zpoles.size(); ++k) {
    if (used[k]) continue;
    used[k] = true;
    Biquad q;
    if (std::abs(zpoles[k].imag()) > 1e-12) {
      // pair with its conjugate
      std::size_t best = k;
      double best_d = 1e300;
      for (std::size_t m = k + 1; m < zpoles.size(); ++m) {
        if (used[m]) continue;
        const double d = std::abs(zpoles[m] - std::conj(zpoles[k]));
        if (d < best_d) { best_d = d; best = m; }
      }
      used[best] = true;
      q.a1 = -2.0 * zpoles[k].real();
      q.a2 = std::norm(zpoles[k]);
      q.b0 = 1.0;
      q.b1 = -2.0 * zero_z;
      q.b2 = 1.0;
    } else {
      q.a1 = -zpoles[k].real();
      q.a2 = 0.0;
      q.b0 = 1.0;
      q.b1 = -zero_z;
      q.b2 = 0.0;
    }
    sos.push_back(q);
  }

  // Unit gain at DC (lowpass) or Nyquist (highpass).
  const C z = band == Band::Lowpass ? C(1.0, 0.0) : C(-1.0, 0.0);
  for (auto& q : sos) {
    const C num = q.b0 + q.b1 / z + q.b2 / (z * z);
    const C den = 1.0 + q.a1 / z + q.a2 / (z * z);
    const double g = std::abs(den / num);
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
  }
  return sos;
}

/// |H(e^{j 2 pi f / fs})| of the cascade.
inline double magnitude_response(const Sos& sos, double f_hz, double fs) {
  const std::complex<double> z = std::polar(1.0, 2.0 * std::numbers::pi * f_hz / fs);
  std::complex<double> h = 1.0;
  for (const auto& q : sos)
    h *= (q.b0 + q.b1 / z + q.b2 / (z * z)) / (1.0 + q.a1 / z + q.a2 / (z * z));
  return std::abs(h);
}

/// Transposed direct form II state per section.
struct SectionState {
  double s1 = 0, s2 = 0;
};

/// Steady-state section states for a constant unit input.
inline std::vector<SectionState> steady_state(const Sos& sos) {
  std::vector<SectionState> zi(sos.size());
  double scale = 1.0;  // DC input amplitude entering this section
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& q = sos[k];
    const double dc_gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = dc_gain * scale;
    // TDF-II: y = b0 x + s1; s1' = b1 x - a1 y + s2; s2' = b2 x - a2 y.
    zi[k].s2 = q.b2 * scale - q.a2 * y;
    zi[k].s1 = y - q.b0 * scale;
    scale = y;
  }
  return zi;
}

inline void sosfilt_inplace(const Sos& sos, std::vector<double>& x, std::vector<SectionState> state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& q = sos[k];
    double s1 = state[k].s1, s2 = state[k].s2;
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * y + s2;
      s2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

/// Zero-phase forward-backward filtering with odd-symmetric edge extension and
/// steady-state initial conditions.
inline std::vector<double> filtfilt(const Sos& sos, const std::vector<double>& x, std::size_t padlen = 300) {
  if (x.empty()) return {};
  padlen = std::min(padlen, x.size() - 1);
  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t k = padlen; k >= 1; --k) ext.push_back(2.0 * x[0] - x[k]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t k = 1; k <= padlen; ++k) ext.push_back(2.0 * x[n - 1] - x[n - 1 - k]);

  const auto zi = steady_state(sos);
  auto scaled = [&](double v) {
    auto s = zi;
    for (auto& st : s) { st.s1 *= v; st.s2 *= v; }
    return s;
  };
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

/// Band-limited resampling by Hann-windowed sinc interpolation. The kernel
/// cutoff sits at 0.45 of the lower of the two sampling rates.
inline std::vector<double> resample(const std::vector<double>& x, double fs_in, double fs_out,
                                    int half_taps = 32) {
  require(fs_in > 0 && fs_out > 0, "sampling rates must be positive");
  if (fs_in == fs_out) return x;
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(x.size()) * fs_out / fs_in + 1e-9));
  const double cutoff = 0.45 * std::min(fs_in, fs_out);     // Hz
  const double fc = cutoff / fs_in;                          // cycles per input sample
  const double support = half_taps * std::max(1.0, fs_in / fs_out);  // input samples
  const double pi = std::numbers::pi;
  std::vector<double> y(n_out);
  const auto n_in = static_cast<long>(x.size());
  for (std::size_t m = 0; m < n_out; ++m) {
    const double center = static_cast<double>(m) * fs_in / fs_out;
    const long lo = std::max(0L, static_cast<long>(std::ceil(center - support)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(center + support)));
    double acc = 0.0, wsum = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double d = static_cast<double>(k) - center;
      const double sinc = d == 0.0 ? 2.0 * fc : std::sin(2.0 * pi * fc * d) / (pi * d);
      const double win = 0.5 * (1.0 + std::cos(pi * d / support));
      const double w = sinc * win;
      acc += w * x[static_cast<std::size_t>(k)];
      wsum += w;
    }
    // Normalizing by the kernel sum keeps unit DC gain, including at the edges.
    y[m] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

}  // namespace deaps::dsp
