#include "vstorm/data/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"

namespace vstorm {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Fraction of pixel (x, y) inside the ellipse, with a tanh edge `edge` pixels wide.
double coverage(const Ellipse& e, double x, double y, double pixel, double edge) {
  const double dx = (x - e.cx) / e.rx, dy = (y - e.cy) / e.ry;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double dist_pixels = (r - 1.0) * std::min(e.rx, e.ry) / pixel;
  return 0.5 * (1.0 - std::tanh(dist_pixels / edge));
}

}  // namespace

PhantomSpec default_phantom_spec(int height, int width, int slices, int frames, std::uint64_t seed) {
  PhantomSpec s;
  s.height = height;
  s.width = width;
  s.slices = slices;
  s.frames = frames;
  s.respiratory_amplitude = 3.0 * height / 64.0;
  Rng rng(derive_seed(seed, {0x7068}));
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  for (int z = 0; z < slices; ++z) {
    s.cardiac_offset.push_back(phase(rng));
    s.respiratory_offset.push_back(phase(rng));
    // Heart shrinks from base to apex; body and lungs change mildly.
    const double f = slices > 1 ? double(z) / (slices - 1) : 0.0;
    SliceAnatomy a;
    a.body = {0.0, 0.05, 0.82 - 0.04 * f, 0.66 - 0.03 * f, 0.35};
    a.left_lung = {-0.42, -0.05, 0.22, 0.36 - 0.05 * f, 0.08};
    a.right_lung = {0.45, -0.02, 0.2 + 0.02 * f, 0.34, 0.08};
    const double heart = 0.26 - 0.06 * f;
    a.myocardium = {0.08, 0.08, heart, heart * 0.9, 0.18};
    a.blood_pool = {0.08, 0.08, heart * 0.55, heart * 0.5, 0.9};
    a.phase_ramp = 0.3;
    s.anatomy.push_back(a);
  }
  return s;
}

void validate(const PhantomSpec& s) {
  if (s.height < 4 || s.width < 4) throw Error("phantom grid too small");
  if (s.slices <= 0 || s.frames <= 0) throw Error("phantom needs positive slices and frames");
  if (s.cardiac_frequency == s.respiratory_frequency) throw Error("cardiac and respiratory frequencies must differ");
  if (static_cast<int>(s.cardiac_offset.size()) != s.slices ||
      static_cast<int>(s.respiratory_offset.size()) != s.slices || static_cast<int>(s.anatomy.size()) != s.slices)
    throw Error("phantom needs one phase offset pair and one anatomy per slice");
  if (s.cardiac_amplitude < 0 || s.cardiac_amplitude >= 1) throw Error("cardiac amplitude must be in [0, 1)");
  const double shift = 2.0 * s.respiratory_amplitude / s.height;
  for (const auto& a : s.anatomy) {
    for (const Ellipse* e : std::initializer_list<const Ellipse*>{&a.body, &a.left_lung, &a.right_lung, &a.myocardium, &a.blood_pool}) {
      if (!(e->rx > 0 && e->ry > 0)) throw Error("ellipse radii must be positive");
      if (std::abs(e->intensity) > 1) throw Error("ellipse intensity outside [-1, 1]");
      if (std::abs(e->cx) + e->rx > 1 || std::abs(e->cy) + e->ry + shift > 1)
        throw Error("ellipse leaves the grid under the respiratory shift");
    }
    if (a.blood_pool.rx * (1 + s.cardiac_amplitude) > a.myocardium.rx ||
        a.blood_pool.ry * (1 + s.cardiac_amplitude) > a.myocardium.ry)
      throw Error("blood pool outgrows the myocardium at peak cardiac amplitude");
  }
}

PhasePair slice_phases(const PhantomSpec& spec, int z, int t) {
  if (z < 0 || z >= spec.slices) throw ShapeError("phantom slice " + std::to_string(z) + " out of range");
  return {two_pi * spec.cardiac_frequency * t + spec.cardiac_offset[z],
          two_pi * spec.respiratory_frequency * t + spec.respiratory_offset[z]};
}

ImageGrid phantom_slice(const PhantomSpec& spec, int z, PhasePair phases) {
  if (z < 0 || z >= spec.slices) throw ShapeError("phantom slice " + std::to_string(z) + " out of range");
  const auto& a = spec.anatomy[z];
  const double pixel = 2.0 / spec.height;
  const double shift = spec.respiratory_amplitude * std::sin(phases.respiratory) * pixel;
  const double pump = 1.0 + spec.cardiac_amplitude * std::sin(phases.cardiac);
  auto moved = [&](Ellipse e) {
    e.cy += shift;
    return e;
  };
  Ellipse body = moved(a.body), ll = moved(a.left_lung), rl = moved(a.right_lung), myo = moved(a.myocardium);
  Ellipse pool = moved(a.blood_pool);
  pool.rx *= pump;
  pool.ry *= pump;

  ImageGrid img(spec.height, spec.width, 2);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double px = -1.0 + (x + 0.5) * 2.0 / spec.width;
      const double py = -1.0 + (y + 0.5) * 2.0 / spec.height;
      double v = 0.0;
      for (const Ellipse* e : {&body, &ll, &rl, &myo, &pool}) {
        const double w = coverage(*e, px, py, pixel, spec.edge_width);
        v += w * (e->intensity - v);
      }
      const double ang = a.phase_ramp * (px + 0.5 * py);
      img.at(0, y, x) = v * std::cos(ang);
      img.at(1, y, x) = v * std::sin(ang);
    }
  return img;
}

ImageGrid phantom_generate(const PhantomSpec& spec, int z, int t) { return phantom_slice(spec, z, slice_phases(spec, z, t)); }

VolumeGrid phantom_volume(const PhantomSpec& spec, PhasePair phases) {
  VolumeGrid v(spec.slices, spec.height, spec.width, 2);
  for (int z = 0; z < spec.slices; ++z) v.set_slice(z, phantom_slice(spec, z, phases));
  return v;
}

CoilMaps make_coil_maps(int height, int width, int coils) {
  if (coils <= 0) throw ShapeError("need at least one coil");
  CoilMaps m{coils, height, width, std::vector<double>(static_cast<std::size_t>(2) * coils * height * width)};
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<double> power(plane, 0.0);
  for (int c = 0; c < coils; ++c) {
    const double ang = two_pi * c / coils;
    const double cx = 1.2 * std::cos(ang), cy = 1.2 * std::sin(ang);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double px = -1.0 + (x + 0.5) * 2.0 / width, py = -1.0 + (y + 0.5) * 2.0 / height;
        const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        const double mag = std::exp(-d2 / 1.5);
        const double ph = 0.5 * ang + 0.4 * (px * std::sin(ang) - py * std::cos(ang));
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        m.values[2 * c * plane + i] = mag * std::cos(ph);
        m.values[(2 * c + 1) * plane + i] = mag * std::sin(ph);
        power[i] += mag * mag;
      }
  }
  for (int c = 0; c < coils; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const double n = 1.0 / std::sqrt(power[i]);
      m.values[2 * c * plane + i] *= n;
      m.values[(2 * c + 1) * plane + i] *= n;
    }
  return m;
}

}  // namespace vstorm
