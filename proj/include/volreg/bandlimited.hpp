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

#pragma once

#include <complex>

#include <Eigen/Core>

#include "volreg/field.hpp"

namespace volreg {

// Low-frequency spectrum of a displacement field: one complex 3-vector per
// frequency of a patch_dims grid, in FFT order. Construction projects the
// spectrum onto its Hermitian-symmetric part so the spatial patch is real.
class BandLimitedField {
 public:
  using Spectrum = Eigen::Matrix<std::complex<double>, 3, Eigen::Dynamic>;

  BandLimitedField(const Dims3& patch_dims, Spectrum spectrum, const Dims3& full_dims);

  // Spectrum of a real spatial patch (the patch is the field's low-pass image
  // sampled on patch_dims).
  static BandLimitedField from_patch(const DisplacementFieldd& patch, const Dims3& full_dims);

  const Dims3& patch_dims() const { return patch_dims_; }
  const Dims3& full_dims() const { return full_dims_; }
  const Spectrum& spectrum() const { return spectrum_; }

  DisplacementFieldd patch() const;

 private:
  Dims3 patch_dims_;
  Dims3 full_dims_;
  Spectrum spectrum_;
};

// iFFT(Pad(FFT(patch))), scaled so a constant patch maps to the same constant.
// Even-length Nyquist bins are split evenly between +/- frequencies.
DisplacementFieldd bandlimited_to_dense(const BandLimitedField& s, const Dims3& full_dims);

// Centered low-frequency crop; the low-pass projection of `f` onto patch_dims.
BandLimitedField dense_to_bandlimited(const DisplacementFieldd& f, const Dims3& patch_dims);

}  // namespace volreg
