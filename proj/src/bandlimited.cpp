/*
 * Copyright 2026 The volreg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "volreg/bandlimited.hpp"

#include <vector>

#include <unsupported/Eigen/FFT>

#include "volreg/error.hpp"

namespace volreg {
namespace {

using cd = std::complex<double>;

// Frequency of FFT bin k on an n-point grid, in (-n/2, n/2].
int bin_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }
int freq_bin(int f, int n) { return f >= 0 ? f : f + n; }

// Maps a p-point spectrum onto an n-point spectrum (n >= p).
void pad_spectrum(const std::vector<cd>& in, std::vector<cd>& out, int n) {
  const int p = int(in.size());
  out.assign(n, cd(0.0, 0.0));
  if (n == p) {
    out = in;
    return;
  }
  for (int k = 0; k < p; ++k) {
    const int f = bin_frequency(k, p);
    if (p % 2 == 0 && f == p / 2) {
      out[freq_bin(f, n)] += 0.5 * in[k];
      out[freq_bin(-f, n)] += 0.5 * in[k];
    } else {
      out[freq_bin(f, n)] += in[k];
    }
  }
}

// Adjoint-consistent crop: left inverse of pad_spectrum.
void crop_spectrum(const std::vector<cd>& in, std::vector<cd>& out, int p) {
  const int n = int(in.size());
  out.assign(p, cd(0.0, 0.0));
  if (n == p) {
    out = in;
    return;
  }
  for (int k = 0; k < p; ++k) {
    const int f = bin_frequency(k, p);
    if (p % 2 == 0 && f == p / 2) {
      out[k] = in[freq_bin(f, n)] + in[freq_bin(-f, n)];
    } else {
      out[k] = in[freq_bin(f, n)];
    }
  }
}

// Spectral resampling of every line along `axis` to length `target`.
DisplacementFieldd resample_axis(const DisplacementFieldd& f, int axis, int target) {
  const Dims3 d = f.dims();
  const int n = d[axis];
  Dims3 od = d;
  od[axis] = target;
  DisplacementFieldd out(od, f.spacing());
  if (n == target) {
    out.vectors() = f.vectors();
    return out;
  }
  Eigen::FFT<double> fft;
  const Eigen::Index in_stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(d.x()) : Eigen::Index(d.x()) * d.y();
  const Eigen::Index out_stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(od.x()) : Eigen::Index(od.x()) * od.y();
  const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  const double scale = double(target) / n;
  std::vector<cd> line(n), spec, resized, back;
  for (int j = 0; j < d[o2]; ++j)
    for (int i = 0; i < d[o1]; ++i) {
      int c[3] = {0, 0, 0};
      c[o1] = i, c[o2] = j;
      const Eigen::Index in_base = f.index(c[0], c[1], c[2]);
      const Eigen::Index out_base = out.index(c[0], c[1], c[2]);
      for (int comp = 0; comp < 3; ++comp) {
        for (int k = 0; k < n; ++k) line[k] = cd(f.vectors()(comp, in_base + k * in_stride), 0.0);
        fft.fwd(spec, line);
        if (target > n) {
          pad_spectrum(spec, resized, target);
        } else {
          crop_spectrum(spec, resized, target);
        }
        fft.inv(back, resized);
        for (int k = 0; k < target; ++k) out.vectors()(comp, out_base + k * out_stride) = back[k].real() * scale;
      }
    }
  return out;
}

// In-place complex FFT along one axis of a 3 x N complex field.
void fft_axis(BandLimitedField::Spectrum& s, const Dims3& d, int axis, bool inverse) {
  Eigen::FFT<double> fft;
  const int n = d[axis];
  const Eigen::Index stride = axis == 0 ? 1 : axis == 1 ? Eigen::Index(d.x()) : Eigen::Index(d.x()) * d.y();
  const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  std::vector<cd> line(n), res;
  for (int j = 0; j < d[o2]; ++j)
    for (int i = 0; i < d[o1]; ++i) {
      int c[3] = {0, 0, 0};
      c[o1] = i, c[o2] = j;
      const Eigen::Index base = c[0] + Eigen::Index(d.x()) * (c[1] + Eigen::Index(d.y()) * c[2]);
      for (int comp = 0; comp < 3; ++comp) {
        for (int k = 0; k < n; ++k) line[k] = s(comp, base + k * stride);
        if (inverse) {
          fft.inv(res, line);
        } else {
          fft.fwd(res, line);
        }
        for (int k = 0; k < n; ++k) s(comp, base + k * stride) = res[k];
      }
    }
}

void check_patch_dims(const Dims3& patch, const Dims3& full) {
  check_dims(patch, "patch dims");
  check_dims(full, "full dims");
  if ((patch.array() > full.array()).any()) {
    throw ArgumentError("band-limited patch dims exceed full dims");
  }
}

}  // namespace

BandLimitedField::BandLimitedField(const Dims3& patch_dims, Spectrum spectrum, const Dims3& full_dims)
    : patch_dims_(patch_dims), full_dims_(full_dims), spectrum_(std::move(spectrum)) {
  check_patch_dims(patch_dims_, full_dims_);
  if (spectrum_.cols() != voxel_count(patch_dims_)) {
    throw ArgumentError("spectrum size does not match patch dims");
  }
  // Hermitian projection: S[k] <- (S[k] + conj(S[-k])) / 2.
  Spectrum sym(3, spectrum_.cols());
  const Dims3& p = patch_dims_;
  for (int z = 0; z < p.z(); ++z)
    for (int y = 0; y < p.y(); ++y)
      for (int x = 0; x < p.x(); ++x) {
        const int mx = (p.x() - x) % p.x(), my = (p.y() - y) % p.y(), mz = (p.z() - z) % p.z();
        const Eigen::Index i = x + Eigen::Index(p.x()) * (y + Eigen::Index(p.y()) * z);
        const Eigen::Index m = mx + Eigen::Index(p.x()) * (my + Eigen::Index(p.y()) * mz);
        sym.col(i) = 0.5 * (spectrum_.col(i) + spectrum_.col(m).conjugate());
      }
  spectrum_ = std::move(sym);
}

BandLimitedField BandLimitedField::from_patch(const DisplacementFieldd& patch, const Dims3& full_dims) {
  check_patch_dims(patch.dims(), full_dims);
  Spectrum s = patch.vectors().cast<cd>();
  for (int a = 0; a < 3; ++a) fft_axis(s, patch.dims(), a, false);
  return BandLimitedField(patch.dims(), std::move(s), full_dims);
}

DisplacementFieldd BandLimitedField::patch() const {
  Spectrum s = spectrum_;
  for (int a = 0; a < 3; ++a) fft_axis(s, patch_dims_, a, true);
  DisplacementFieldd out(patch_dims_);
  out.vectors() = s.real();
  return out;
}

DisplacementFieldd bandlimited_to_dense(const BandLimitedField& s, const Dims3& full_dims) {
  check_patch_dims(s.patch_dims(), full_dims);
  DisplacementFieldd f = s.patch();
  for (int a = 0; a < 3; ++a) f = resample_axis(f, a, full_dims[a]);
  return f;
}

BandLimitedField dense_to_bandlimited(const DisplacementFieldd& f, const Dims3& patch_dims) {
  check_patch_dims(patch_dims, f.dims());
  DisplacementFieldd p = f;
  for (int a = 0; a < 3; ++a) p = resample_axis(p, a, patch_dims[a]);
  return BandLimitedField::from_patch(p, f.dims());
}

}  // namespace volreg
