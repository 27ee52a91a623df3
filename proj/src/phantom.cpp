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

#include "volreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "volreg/error.hpp"
#include "volreg/filters.hpp"

namespace volreg {
namespace {

using Vec3 = Eigen::Vector3d;

constexpr double kPi = std::numbers::pi;

// Global translation as a fraction of the local deformation magnitude.
constexpr double kTranslationShare = 0.6;

// Approximate signed distances in voxels; negative inside.
struct Ellipsoid {
  Vec3 c, r;
  double sd(const Vec3& p) const {
    const double q = ((p - c).array() / r.array()).matrix().norm();
    return (q - 1.0) * r.minCoeff();
  }
};

struct Cylinder {  // elliptic, infinite along z
  Vec3 c, r;
  double sd(const Vec3& p) const {
    const double q = std::hypot((p.x() - c.x()) / r.x(), (p.y() - c.y()) / r.y());
    return (q - 1.0) * std::min(r.x(), r.y());
  }
};

struct Capsule {
  Vec3 a, b;
  double r;
  double sd(const Vec3& p) const {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm() - r;
  }
};

// Tube along the in-plane ellipse c + (ax cos t, ay sin t) at height z, for
// t in [t0, t1] (radians, t1 > t0, may exceed pi).
struct RibArc {
  Vec3 c;
  double ax, ay, t0, t1, r;
  Vec3 at(double t) const { return Vec3(c.x() + ax * std::cos(t), c.y() + ay * std::sin(t), c.z()); }
  double sd(const Vec3& p) const {
    double t = std::atan2((p.y() - c.y()) / ay, (p.x() - c.x()) / ax);
    while (t < t0) t += 2 * kPi;
    if (t > t1) {
      const double to_start = (p - at(t0)).norm(), to_end = (p - at(t1)).norm();
      return std::min(to_start, to_end) - r;
    }
    return (p - at(t)).norm() - r;
  }
};

// Partial-volume occupancy from a signed distance.
inline double occupancy(double sd) { return std::clamp(0.5 - sd, 0.0, 1.0); }

struct Layer {
  enum Kind { kEllipsoid, kCylinder, kCapsule, kRib } kind = kEllipsoid;
  Ellipsoid e{};
  Cylinder cyl{};
  Capsule cap{};
  RibArc rib{};
  float hu = 0.0f;
  std::uint16_t label = 0;  // 0 keeps the label underneath
  Vec3 lo, hi;  // bounding box, voxels

  double sd(const Vec3& p) const {
    switch (kind) {
      case kEllipsoid: return e.sd(p);
      case kCylinder: return cyl.sd(p);
      case kCapsule: return cap.sd(p);
      case kRib: return rib.sd(p);
    }
    return 1e9;
  }
};

struct Scene {
  std::vector<Layer> layers;  // painted in order
  float background = -1000.0f;
  std::vector<Vec3> landmarks;
  int body = 0;  // index of the trunk layer
};

class SceneBuilder {
 public:
  SceneBuilder(const Dims3& dims, std::mt19937_64& rng) : dims_(dims), rng_(rng) {
    centre_ = (dims.cast<double>() - Vec3::Ones()) / 2.0;
    half_ = dims.cast<double>() / 2.0;
  }

  // Normalised [-1, 1] coordinates to voxels.
  Vec3 vox(const Vec3& q) const { return centre_ + (q.array() * half_.array()).matrix(); }
  Vec3 scale(const Vec3& r) const { return (r.array() * half_.array()).matrix(); }
  double iso(double r) const { return r * half_.minCoeff(); }

  double jitter(double amount) { return std::uniform_real_distribution<double>(-amount, amount)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Layer& ellipsoid(const Vec3& q, const Vec3& r, float hu, std::uint16_t label) {
    Layer l;
    l.kind = Layer::kEllipsoid;
    l.e = {vox(q), scale(r)};
    l.lo = l.e.c - l.e.r - Vec3::Constant(2);
    l.hi = l.e.c + l.e.r + Vec3::Constant(2);
    return push(l, hu, label);
  }
  Layer& cylinder(const Vec3& q, const Vec3& r, float hu, std::uint16_t label) {
    Layer l;
    l.kind = Layer::kCylinder;
    l.cyl = {vox(q), scale(r)};
    l.lo = Vec3(l.cyl.c.x() - l.cyl.r.x() - 2, l.cyl.c.y() - l.cyl.r.y() - 2, -1e9);
    l.hi = Vec3(l.cyl.c.x() + l.cyl.r.x() + 2, l.cyl.c.y() + l.cyl.r.y() + 2, 1e9);
    return push(l, hu, label);
  }
  Layer& capsule(const Vec3& a, const Vec3& b, double r_vox, float hu, std::uint16_t label) {
    Layer l;
    l.kind = Layer::kCapsule;
    l.cap = {a, b, r_vox};
    l.lo = a.cwiseMin(b) - Vec3::Constant(r_vox + 2);
    l.hi = a.cwiseMax(b) + Vec3::Constant(r_vox + 2);
    return push(l, hu, label);
  }
  Layer& rib(const RibArc& arc, float hu, std::uint16_t label) {
    Layer l;
    l.kind = Layer::kRib;
    l.rib = arc;
    l.lo = Vec3(arc.c.x() - arc.ax - arc.r - 2, arc.c.y() - arc.ay - arc.r - 2, arc.c.z() - arc.r - 2);
    l.hi = Vec3(arc.c.x() + arc.ax + arc.r + 2, arc.c.y() + arc.ay + arc.r + 2, arc.c.z() + arc.r + 2);
    return push(l, hu, label);
  }

  Scene scene;

 private:
  Layer& push(Layer& l, float hu, std::uint16_t label) {
    l.hu = hu;
    l.label = label;
    scene.layers.push_back(l);
    return scene.layers.back();
  }

  Dims3 dims_;
  std::mt19937_64& rng_;
  Vec3 centre_, half_;
};

// x: patient left/right, y: anterior (-) to posterior (+), z: cranial (-) to caudal (+).
Scene build_scene(const Dims3& dims, const Palette& pal, std::mt19937_64& rng) {
  SceneBuilder b(dims, rng);
  Scene& s = b.scene;
  s.background = pal.air;

  const double bx = 0.85 + b.jitter(0.03), by = 0.65 + b.jitter(0.03);
  s.body = int(s.layers.size());
  b.cylinder(Vec3(0, 0, 0), Vec3(bx, by, 1), pal.soft_tissue, 0);

  // Lungs.
  const double lz = 0.05 + b.jitter(0.04);
  const Vec3 lung_r(0.30 + b.jitter(0.02), 0.42 + b.jitter(0.02), 0.75 + b.jitter(0.03));
  const Vec3 left_c(0.40 + b.jitter(0.02), -0.05, lz), right_c(-0.40 + b.jitter(0.02), -0.05, lz);
  b.ellipsoid(left_c, lung_r, pal.lung, kLungLeft);
  b.ellipsoid(right_c, lung_r, pal.lung, kLungRight);

  // Vessels and nodules inside the lungs give the parenchyma texture.
  std::vector<Vec3> blob_centres;
  for (const Vec3& lc : {left_c, right_c}) {
    for (int i = 0; i < 40; ++i) {
      Vec3 u;
      do {
        u = Vec3(b.uniform(-1, 1), b.uniform(-1, 1), b.uniform(-1, 1));
      } while (u.norm() > 0.8);
      const Vec3 q = lc + (u.array() * lung_r.array()).matrix();
      b.ellipsoid(q, Vec3::Constant(b.uniform(0.025, 0.045)), float(b.uniform(-200, 50)), 0);
      blob_centres.push_back(b.vox(q));
    }
    for (int i = 0; i < 15; ++i) {
      Vec3 u;
      do {
        u = Vec3(b.uniform(-1, 1), b.uniform(-1, 1), b.uniform(-1, 1));
      } while (u.norm() > 0.7);
      const Vec3 qa = lc + (u.array() * lung_r.array()).matrix();
      Vec3 dir(b.uniform(-1, 1), b.uniform(-1, 1), b.uniform(-1, 1));
      dir.normalize();
      const Vec3 qb = qa + b.uniform(0.1, 0.25) * dir;
      b.capsule(b.vox(qa), b.vox(qb), b.iso(b.uniform(0.015, 0.025)), float(b.uniform(-150, 40)), 0);
    }
  }

  // Heart overrides the medial lung.
  b.ellipsoid(Vec3(0.05 + b.jitter(0.03), -0.25, -0.15 + b.jitter(0.03)),
              Vec3(0.25, 0.22, 0.30) + Vec3::Constant(b.jitter(0.02)), pal.heart, kHeart);

  // Airway tree: trachea, two main bronchi, two lobar branches per side.
  const double wall = b.iso(0.085), lumen = b.iso(0.06);
  const Vec3 top = b.vox(Vec3(0, -0.05, -1.05));
  const Vec3 carina = b.vox(Vec3(b.jitter(0.02), -0.05, -0.35 + b.jitter(0.03)));
  struct Segment {
    Vec3 a, b;
    double k;  // radius factor
  };
  std::vector<Segment> segments = {{top, carina, 1.0}};
  std::vector<Vec3> forks = {carina};
  for (double side : {1.0, -1.0}) {
    const Vec3 fork = b.vox(Vec3(side * (0.28 + b.jitter(0.02)), -0.05 + b.jitter(0.03), -0.12 + b.jitter(0.03)));
    segments.push_back({carina, fork, 0.8});
    forks.push_back(fork);
    segments.push_back({fork, b.vox(Vec3(side * 0.45, -0.25 + b.jitter(0.04), 0.35 + b.jitter(0.05))), 0.6});
    segments.push_back({fork, b.vox(Vec3(side * 0.42, 0.18 + b.jitter(0.04), 0.30 + b.jitter(0.05))), 0.6});
  }
  for (const Segment& sg : segments) b.capsule(sg.a, sg.b, sg.k * wall, pal.airway_wall, 0);
  for (const Segment& sg : segments) b.capsule(sg.a, sg.b, sg.k * lumen, pal.air, kAirway);

  // Vertebral bodies along the posterior midline.
  std::vector<Vec3> vertebrae;
  for (double z = -0.8; z <= 0.81; z += 0.22) {
    const Vec3 q(b.jitter(0.01), 0.48, z + b.jitter(0.02));
    b.ellipsoid(q, Vec3(0.12, 0.10, 0.08), pal.bone, kVertebra);
    vertebrae.push_back(b.vox(q));
  }

  // Ribs: arcs around the lungs, open at the sternum and the spine.
  std::vector<Vec3> rib_marks;
  const double rib_r = b.iso(0.03);
  for (double z = -0.7; z <= 0.61; z += 0.26) {
    const Vec3 c = b.vox(Vec3(0, 0, z + b.jitter(0.02)));
    const double ax = (bx - 0.07) * dims.x() / 2.0, ay = (by - 0.07) * dims.y() / 2.0;
    // Left rib from near the spine round to the front, mirrored on the right.
    const RibArc left{c, ax, ay, -0.35 * kPi, 0.42 * kPi, rib_r};
    const RibArc right{c, ax, ay, 0.58 * kPi, 1.35 * kPi, rib_r};
    b.rib(left, pal.bone, kRib);
    b.rib(right, pal.bone, kRib);
    rib_marks.push_back(left.at(0.05 * kPi));
    rib_marks.push_back(right.at(0.95 * kPi));
  }

  // Tumour in the right lung.
  const Vec3 tq = right_c + Vec3(b.jitter(0.06), 0.05 + b.jitter(0.06), 0.2 + b.jitter(0.08));
  b.ellipsoid(tq, Vec3::Constant(0.08 + b.jitter(0.01)), pal.tumour, kTumour);

  s.landmarks = forks;
  s.landmarks.insert(s.landmarks.end(), vertebrae.begin(), vertebrae.end());
  s.landmarks.insert(s.landmarks.end(), rib_marks.begin(), rib_marks.end());
  s.landmarks.push_back(b.vox(tq));
  for (std::size_t i = 0; i < blob_centres.size(); i += 13) s.landmarks.push_back(blob_centres[i]);
  return s;
}

struct Sample {
  float hu;
  std::uint16_t label;
  bool trunk;
};

Sample render_point(const Scene& s, const Vec3& p) {
  double v = s.background;
  std::uint16_t label = 0;
  bool trunk = false;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const Layer& l = s.layers[i];
    if ((p.array() < l.lo.array()).any() || (p.array() > l.hi.array()).any()) continue;
    const double sd = l.sd(p);
    const double o = occupancy(sd);
    if (o <= 0.0) continue;
    v = v * (1.0 - o) + double(l.hu) * o;
    if (int(i) == s.body) trunk = sd <= 0.0;
    if (sd <= 0.0) {
      if (l.label) label = l.label;
    }
  }
  return {float(v), label, trunk};
}

void render(const Scene& s, const Dims3& dims, const DisplacementFieldd* pull, Volume& vol, LabelMask& labels,
            TrunkMask* trunk) {
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) {
        Vec3 p(x, y, z);
        if (pull) p += (*pull)(x, y, z);
        const Sample smp = render_point(s, p);
        const Eigen::Index i = vol.index(x, y, z);
        vol[i] = smp.hu;
        labels[i] = smp.label;
        if (trunk) (*trunk)[i] = smp.trunk;
      }
}

VelocityFieldd random_velocity(const Dims3& dims, double magnitude, std::mt19937_64& rng) {
  VelocityFieldd v(dims);
  if (magnitude == 0.0) return v;
  // Noise on a grid padded by the kernel radius so the cropped result has no
  // edge-replication artefacts.
  const double sigma = dims.minCoeff() / 12.0;
  const int pad = int(std::ceil(3.0 * sigma));
  const Dims3 big = dims + Dims3::Constant(2 * pad);
  VelocityFieldd noise(big);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    for (int c = 0; c < 3; ++c) noise.vectors()(c, i) = n01(rng);
  noise = gaussian_smooth(noise, sigma);
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) v(x, y, z) = noise(x + pad, y + pad, z + pad);
  const double peak = v.vectors().colwise().norm().maxCoeff();
  v = v * (magnitude / peak);
  // Rigid offset of the whole scene: displaces without bending, so the
  // Jacobian stays untouched.
  Vec3 t(n01(rng), n01(rng), n01(rng));
  v.vectors().colwise() += kTranslationShare * magnitude * t.normalized();
  return v;
}

}  // namespace

CbctConfig CbctConfig::none() {
  CbctConfig c;
  c.contrast = 1.0;
  c.bias = 0.0;
  c.blur_sigma = 0.0;
  c.ring_amplitude = 0.0;
  c.streak_amplitude = 0.0;
  c.noise_sigma = 0.0;
  c.fov_radius = 0.0;
  return c;
}

bool CbctConfig::any() const {
  return contrast != 1.0 || bias != 0.0 || blur_sigma > 0.0 || ring_amplitude != 0.0 || streak_amplitude != 0.0 ||
         noise_sigma > 0.0 || fov_radius > 0.0;
}

Volume degrade_cbct(const Volume& v, const CbctConfig& cfg, std::uint64_t seed) {
  if (cfg.blur_sigma < 0.0 || cfg.noise_sigma < 0.0 || cfg.fov_radius < 0.0 || cfg.ring_period <= 0.0) {
    throw ArgumentError("degrade_cbct: negative blur, noise or radius, or non-positive ring period");
  }
  Volume out = v;
  if (cfg.contrast != 1.0 || cfg.bias != 0.0) {
    out.data() = out.data() * float(cfg.contrast) + float(cfg.bias);
  }
  if (cfg.blur_sigma > 0.0) out = gaussian_smooth(out, cfg.blur_sigma);

  const Dims3& d = v.dims();
  const double cx = (d.x() - 1) / 2.0, cy = (d.y() - 1) / 2.0;
  if (cfg.ring_amplitude != 0.0 || cfg.streak_amplitude != 0.0) {
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    const double phase = std::uniform_real_distribution<double>(0, 2 * kPi)(rng);
    for (int z = 0; z < d.z(); ++z)
      for (int y = 0; y < d.y(); ++y)
        for (int x = 0; x < d.x(); ++x) {
          const double r = std::hypot(x - cx, y - cy), t = std::atan2(y - cy, x - cx);
          const double ring = cfg.ring_amplitude * std::sin(2 * kPi * r / cfg.ring_period);
          const double streak = cfg.streak_amplitude * std::pow(std::cos(cfg.streak_count * t + phase), 8);
          out(x, y, z) += float(ring + streak);
        }
  }
  if (cfg.noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += float(noise(rng));
  }
  if (cfg.fov_radius > 0.0) {
    const double r = cfg.fov_radius * std::min(d.x(), d.y()) / 2.0;
    for (int z = 0; z < d.z(); ++z)
      for (int y = 0; y < d.y(); ++y)
        for (int x = 0; x < d.x(); ++x)
          if (std::hypot(x - cx, y - cy) > r) out(x, y, z) = cfg.fill;
  }
  return out;
}

PhantomCase make_phantom(std::uint64_t seed, const PhantomConfig& cfg) {
  check_dims(cfg.dims, "phantom dims");
  if (cfg.dims.minCoeff() < 48) throw ArgumentError("phantom: every dimension must be at least 48");
  if (!(cfg.deform_magnitude >= 0.0 && cfg.deform_magnitude <= cfg.dims.minCoeff() / 8.0)) {
    throw ArgumentError("phantom: deform_magnitude must lie in [0, min(dims)/8]");
  }
  check_spacing(cfg.spacing);

  PhantomCase pc;
  pc.seed = seed;
  pc.config = cfg;

  std::mt19937_64 rng(seed);
  const Scene scene = build_scene(cfg.dims, cfg.palette, rng);

  // Ground truth: u = exp(v) maps fixed to moving, the moving image is the
  // scene pulled through w = exp(-v).
  std::mt19937_64 field_rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  const VelocityFieldd unit = random_velocity(cfg.dims, cfg.deform_magnitude > 0 ? 1.0 : 0.0, field_rng);
  double magnitude = cfg.deform_magnitude;
  DisplacementFieldd u(cfg.dims), w(cfg.dims);
  constexpr int kMaxRetries = 10;
  for (;;) {
    const VelocityFieldd v = unit * magnitude;
    u = exp_svf(v);
    w = exp_svf(-v);
    const double min_det = std::min(jacobian_determinant(u).data().minCoeff(), jacobian_determinant(w).data().minCoeff());
    if (min_det > 0.05) break;
    if (++pc.retries > kMaxRetries) {
      throw RegistrationFailedError("phantom: could not keep the ground-truth Jacobian positive");
    }
    magnitude *= 0.8;
  }
  pc.magnitude_used = magnitude;

  pc.fixed = Volume(cfg.dims, cfg.spacing);
  pc.labels_fixed = LabelMask(cfg.dims, cfg.spacing);
  pc.trunk = TrunkMask(cfg.dims, cfg.spacing);
  render(scene, cfg.dims, nullptr, pc.fixed, pc.labels_fixed, &pc.trunk);

  pc.moving = Volume(cfg.dims, cfg.spacing);
  pc.labels_moving = LabelMask(cfg.dims, cfg.spacing);
  render(scene, cfg.dims, magnitude > 0 ? &w : nullptr, pc.moving, pc.labels_moving, nullptr);
  if (cfg.cbct) pc.moving = degrade_cbct(pc.moving, cfg.cbct_config, seed + 17);

  pc.gt_field = DisplacementFieldd(cfg.dims, cfg.spacing);
  pc.gt_field.vectors() = u.vectors();
  pc.gt_velocity = VelocityFieldd(cfg.dims, cfg.spacing);
  pc.gt_velocity.vectors() = (unit * magnitude).vectors();

  const Vec3 hi = cfg.dims.cast<double>() - Vec3::Ones();
  for (const Vec3& q : scene.landmarks) {
    const Vec3 p = q.array().round().matrix();
    if ((p.array() < 0).any() || (p.array() > hi.array()).any()) continue;
    Vec3 m = p + u.sample(p);
    m = (m * 1e4).array().round().matrix() / 1e4;
    if ((m.array() < 0).any() || (m.array() > hi.array()).any()) continue;
    pc.landmarks.pairs.push_back({p, m});
  }
  return pc;
}

}  // namespace volreg
