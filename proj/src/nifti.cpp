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

#include "volreg/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include <zlib.h>

#include "volreg/error.hpp"

namespace volreg {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// Byte offsets into the 348-byte NIfTI-1 header.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int intent_code = 68;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int scl_inter = 116;
constexpr int xyzt_units = 123;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int srow_x = 280;
constexpr int magic = 344;
}  // namespace off

template <typename T>
T get(const std::vector<unsigned char>& buf, std::size_t at) {
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t at, T v) {
  std::memcpy(buf.data() + at, &v, sizeof(T));
}

std::int32_t swap32(std::int32_t v) {
  const auto u = std::uint32_t(v);
  return std::int32_t((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
}

bool has_gz_suffix(const std::filesystem::path& p) { return p.extension() == ".gz"; }

// gzread reads plain files transparently.
std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char chunk[1 << 16];
  for (;;) {
    const int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      gzclose(f);
      throw IoError("read error in " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk, chunk + n);
  }
  gzclose(f);
  return out;
}

void spill(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw IoError("cannot write " + path.string());
    std::size_t done = 0;
    while (done < bytes.size()) {
      const unsigned n = unsigned(std::min<std::size_t>(bytes.size() - done, 1u << 30));
      if (gzwrite(f, bytes.data() + done, n) != int(n)) {
        gzclose(f);
        throw IoError("write error in " + path.string());
      }
      done += n;
    }
    if (gzclose(f) != Z_OK) throw IoError("write error in " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write error in " + path.string());
}

int bytes_per_voxel(NiftiType t) {
  switch (t) {
    case NiftiType::UInt8: return 1;
    case NiftiType::Int16: return 2;
    case NiftiType::UInt16: return 2;
    case NiftiType::Float32: return 4;
    case NiftiType::Float64: return 8;
  }
  return 0;
}

bool known_type(std::int16_t code) {
  return code == 2 || code == 4 || code == 16 || code == 64 || code == 512;
}

std::vector<unsigned char> make_header(const std::array<std::int16_t, 8>& dim,
                                       const Eigen::Vector3d& spacing,
                                       const Eigen::Vector3d& origin, NiftiType type,
                                       std::int16_t intent) {
  std::vector<unsigned char> h(kVoxOffset, 0);
  put<std::int32_t>(h, off::sizeof_hdr, kHeaderSize);
  for (int i = 0; i < 8; ++i) put<std::int16_t>(h, off::dim + 2 * i, dim[i]);
  put<std::int16_t>(h, off::intent_code, intent);
  put<std::int16_t>(h, off::datatype, std::int16_t(type));
  put<std::int16_t>(h, off::bitpix, std::int16_t(8 * bytes_per_voxel(type)));
  float pix[8] = {1.0f, float(spacing.x()), float(spacing.y()), float(spacing.z()), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<float>(h, off::pixdim + 4 * i, pix[i]);
  put<float>(h, off::vox_offset, float(kVoxOffset));
  put<float>(h, off::scl_slope, 1.0f);
  put<float>(h, off::scl_inter, 0.0f);
  h[off::xyzt_units] = 2;  // mm
  put<std::int16_t>(h, off::qform_code, 0);
  put<std::int16_t>(h, off::sform_code, 1);
  const float srow[12] = {float(spacing.x()), 0, 0, float(origin.x()),
                          0, float(spacing.y()), 0, float(origin.y()),
                          0, 0, float(spacing.z()), float(origin.z())};
  for (int i = 0; i < 12; ++i) put<float>(h, off::srow_x + 4 * i, srow[i]);
  std::memcpy(h.data() + off::magic, "n+1\0", 4);
  return h;
}

template <typename Stored, typename Source>
void append_data(std::vector<unsigned char>& bytes, const Source& values, Eigen::Index n) {
  const std::size_t at = bytes.size();
  bytes.resize(at + std::size_t(n) * sizeof(Stored));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Stored s = Stored(values(i));
    std::memcpy(bytes.data() + at + std::size_t(i) * sizeof(Stored), &s, sizeof(Stored));
  }
}

std::array<std::int16_t, 8> dim3(const Dims3& d) {
  for (int a = 0; a < 3; ++a) {
    if (d[a] > std::numeric_limits<std::int16_t>::max()) {
      throw ArgumentError("dimension too large for NIfTI-1");
    }
  }
  return {3, std::int16_t(d.x()), std::int16_t(d.y()), std::int16_t(d.z()), 1, 1, 1, 1};
}

template <typename T>
Image<T> image_from(const NiftiImage& n) {
  Image<T> img(n.spatial_dims(), n.spacing());
  img.set_origin(n.origin());
  const Eigen::Index count = img.size();
  if (Eigen::Index(n.values.size()) < count) {
    throw MalformedFileError("image holds fewer samples than its spatial extent");
  }
  for (Eigen::Index i = 0; i < count; ++i) img[i] = T(n.values[std::size_t(i)]);
  return img;
}

}  // namespace

Dims3 NiftiImage::spatial_dims() const {
  Dims3 d;
  for (int a = 0; a < 3; ++a) d[a] = a < dim[0] ? std::max<int>(1, dim[a + 1]) : 1;
  return d;
}

Eigen::Vector3d NiftiImage::spacing() const {
  Eigen::Vector3d s;
  for (int a = 0; a < 3; ++a) {
    const float p = std::fabs(pixdim[a + 1]);
    s[a] = (std::isfinite(p) && p > 0.0f) ? double(p) : 1.0;
  }
  return s;
}

Eigen::Vector3d NiftiImage::origin() const {
  if (sform_code > 0) return Eigen::Vector3d(srow[3], srow[7], srow[11]);
  return Eigen::Vector3d::Zero();
}

NiftiImage read_nifti(const std::filesystem::path& path) {
  const std::vector<unsigned char> buf = slurp(path);
  if (buf.size() < std::size_t(kHeaderSize)) {
    throw TruncatedFileError(path.string() + ": shorter than a NIfTI-1 header");
  }
  const std::int32_t sizeof_hdr = get<std::int32_t>(buf, off::sizeof_hdr);
  if (sizeof_hdr != kHeaderSize) {
    if (swap32(sizeof_hdr) == kHeaderSize) {
      throw UnsupportedFormatError(path.string() +
                                   ": byte-swapped (big-endian) NIfTI header is not supported");
    }
    throw MalformedFileError(path.string() + ": sizeof_hdr is not 348");
  }
  const char* magic = reinterpret_cast<const char*>(buf.data() + off::magic);
  if (std::memcmp(magic, "ni1\0", 4) == 0) {
    throw UnsupportedFormatError(path.string() + ": two-file NIfTI (hdr/img pair) is not supported");
  }
  if (std::memcmp(magic, "n+1\0", 4) != 0) {
    throw MalformedFileError(path.string() + ": bad NIfTI-1 magic");
  }

  NiftiImage n;
  for (int i = 0; i < 8; ++i) n.dim[i] = get<std::int16_t>(buf, off::dim + 2 * i);
  for (int i = 0; i < 8; ++i) n.pixdim[i] = get<float>(buf, off::pixdim + 4 * i);
  if (n.dim[0] < 1 || n.dim[0] > 7) throw MalformedFileError(path.string() + ": dim[0] out of range");
  std::size_t count = 1;
  for (int i = 1; i <= n.dim[0]; ++i) {
    if (n.dim[i] < 1) throw MalformedFileError(path.string() + ": non-positive dimension");
    count *= std::size_t(n.dim[i]);
  }
  const std::int16_t code = get<std::int16_t>(buf, off::datatype);
  if (!known_type(code)) {
    throw UnsupportedFormatError(path.string() + ": unsupported datatype code " + std::to_string(code));
  }
  n.datatype = NiftiType(code);
  n.intent_code = get<std::int16_t>(buf, off::intent_code);
  n.qform_code = get<std::int16_t>(buf, off::qform_code);
  n.sform_code = get<std::int16_t>(buf, off::sform_code);
  for (int i = 0; i < 12; ++i) n.srow[i] = get<float>(buf, off::srow_x + 4 * i);

  const float vox_offset_f = get<float>(buf, off::vox_offset);
  if (!std::isfinite(vox_offset_f) || vox_offset_f < float(kHeaderSize)) {
    throw MalformedFileError(path.string() + ": invalid vox_offset");
  }
  const std::size_t vox_offset = std::size_t(vox_offset_f);
  const std::size_t bpv = std::size_t(bytes_per_voxel(n.datatype));
  if (buf.size() < vox_offset || (buf.size() - vox_offset) / bpv < count) {
    throw TruncatedFileError(path.string() + ": declared extent exceeds file length");
  }

  float slope = get<float>(buf, off::scl_slope);
  float inter = get<float>(buf, off::scl_inter);
  if (!std::isfinite(inter)) inter = 0.0f;
  // Identity scaling is skipped so stored values (including -0) pass through untouched.
  const bool scaled = std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f);

  n.values.resize(count);
  const unsigned char* src = buf.data() + vox_offset;
  for (std::size_t i = 0; i < count; ++i) {
    double v = 0.0;
    switch (n.datatype) {
      case NiftiType::UInt8: v = src[i]; break;
      case NiftiType::Int16: { std::int16_t s; std::memcpy(&s, src + 2 * i, 2); v = s; break; }
      case NiftiType::UInt16: { std::uint16_t s; std::memcpy(&s, src + 2 * i, 2); v = s; break; }
      case NiftiType::Float32: { float s; std::memcpy(&s, src + 4 * i, 4); v = s; break; }
      case NiftiType::Float64: { double s; std::memcpy(&s, src + 8 * i, 8); v = s; break; }
    }
    n.values[i] = scaled ? v * double(slope) + double(inter) : v;
  }
  return n;
}

Volume read_volume(const std::filesystem::path& path) {
  Volume v = image_from<float>(read_nifti(path));
  if (!v.data().allFinite()) throw MalformedFileError(path.string() + ": non-finite intensities");
  return v;
}

LabelMask read_labels(const std::filesystem::path& path) {
  const NiftiImage n = read_nifti(path);
  for (double v : n.values) {
    if (!(v >= 0.0) || v != std::floor(v) || v > 65535.0) {
      throw MalformedFileError(path.string() + ": label values must be nonnegative integers");
    }
  }
  return image_from<std::uint16_t>(n);
}

TrunkMask read_trunk(const std::filesystem::path& path) {
  const NiftiImage n = read_nifti(path);
  TrunkMask m(n.spatial_dims(), n.spacing());
  m.set_origin(n.origin());
  for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = n.values[std::size_t(i)] != 0.0 ? 1 : 0;
  return m;
}

DisplacementFieldd read_field(const std::filesystem::path& path) {
  const NiftiImage n = read_nifti(path);
  if (n.dim[0] != 5 || n.dim[4] != 1 || n.dim[5] != 3) {
    throw MalformedFileError(path.string() + ": displacement field must have dims [nx,ny,nz,1,3]");
  }
  DisplacementFieldd f(n.spatial_dims(), n.spacing());
  const Eigen::Index count = f.size();
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < count; ++i) f.vectors()(c, i) = n.values[std::size_t(c * count + i)];
  if (!f.all_finite()) throw MalformedFileError(path.string() + ": non-finite displacement");
  return f;
}

void write_nifti(const Volume& v, const std::filesystem::path& path) {
  auto bytes = make_header(dim3(v.dims()), v.spacing(), v.origin(), NiftiType::Float32, 0);
  append_data<float>(bytes, v.data(), v.size());
  spill(bytes, path);
}

void write_nifti(const LabelMask& v, const std::filesystem::path& path) {
  auto bytes = make_header(dim3(v.dims()), v.spacing(), v.origin(), NiftiType::UInt16, 0);
  append_data<std::uint16_t>(bytes, v.data(), v.size());
  spill(bytes, path);
}

void write_nifti(const TrunkMask& v, const std::filesystem::path& path) {
  auto bytes = make_header(dim3(v.dims()), v.spacing(), v.origin(), NiftiType::UInt8, 0);
  append_data<std::uint8_t>(bytes, v.data(), v.size());
  spill(bytes, path);
}

void write_field(const DisplacementFieldd& f, const std::filesystem::path& path) {
  auto dim = dim3(f.dims());
  dim[0] = 5;
  dim[5] = 3;
  auto bytes = make_header(dim, f.spacing(), Eigen::Vector3d::Zero(), NiftiType::Float32,
                           kNiftiIntentVector);
  for (int c = 0; c < 3; ++c) append_data<float>(bytes, f.vectors().row(c), f.size());
  spill(bytes, path);
}

void write_field_raw(const DisplacementFieldd& f, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  for (int c = 0; c < 3; ++c) append_data<float>(bytes, f.vectors().row(c), f.size());
  spill(bytes, path);
}

DisplacementFieldd read_field_raw(const std::filesystem::path& path, const Dims3& dims,
                                  const Eigen::Vector3d& spacing) {
  const std::vector<unsigned char> buf = slurp(path);
  DisplacementFieldd f(dims, spacing);
  const std::size_t need = std::size_t(f.size()) * 3 * sizeof(float);
  if (buf.size() < need) throw TruncatedFileError(path.string() + ": raw field shorter than dims imply");
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      float s;
      std::memcpy(&s, buf.data() + (std::size_t(c * f.size() + i)) * sizeof(float), sizeof(float));
      f.vectors()(c, i) = s;
    }
  return f;
}

}  // namespace volreg
