#pragma once

// Synthetic multislice cine phantom. Each slice is a deterministic function of
// a (cardiac, respiratory) phase pair; slices are acquired with independent
// phase offsets.

#include <cstdint>
#include <vector>

#include "vstorm/measurement/grid.hpp"
#include "vstorm/measurement/operators.hpp"

namespace vstorm {

/// Soft-edged ellipse in normalized coordinates ([-1, 1] across the grid, y down).
struct Ellipse {
  double cx = 0, cy = 0;
  double rx = 0, ry = 0;
  double intensity = 0;
  bool operator==(const Ellipse&) const = default;
};

struct SliceAnatomy {
  Ellipse body;
  Ellipse left_lung, right_lung;
  Ellipse myocardium;
  Ellipse blood_pool;  // radius modulated by the cardiac phase
  double phase_ramp = 0;  // radians per normalized unit, along (x + y/2)
  bool operator==(const SliceAnatomy&) const = default;
};

struct PhantomSpec {
  int height = 64;
  int width = 64;
  int slices = 4;
  int frames = 192;
  double cardiac_frequency = 0.0517;      // cycles per frame
  double respiratory_frequency = 0.0131;  // cycles per frame
  std::vector<double> cardiac_offset;      // per slice, radians
  std::vector<double> respiratory_offset;  // per slice, radians
  std::vector<SliceAnatomy> anatomy;       // per slice
  double cardiac_amplitude = 0.25;         // relative blood-pool radius change
  double respiratory_amplitude = 3.0;      // vertical shift in pixels
  double edge_width = 0.7;                 // pixels
  bool operator==(const PhantomSpec&) const = default;
};

/// Default anatomy tapering from base to apex, phase offsets uniform in [0, 2 pi) from `seed`.
PhantomSpec default_phantom_spec(int height, int width, int slices, int frames, std::uint64_t seed);

/// Throws Error naming the violated condition.
void validate(const PhantomSpec& spec);

struct PhasePair {
  double cardiac = 0;
  double respiratory = 0;
};

/// Phases of slice z at frame t.
PhasePair slice_phases(const PhantomSpec& spec, int z, int t);

/// Complex (two-channel) slice z at an arbitrary phase pair.
ImageGrid phantom_slice(const PhantomSpec& spec, int z, PhasePair phases);
/// Slice z as acquired at frame t.
ImageGrid phantom_generate(const PhantomSpec& spec, int z, int t);
/// All slices at one common phase pair.
VolumeGrid phantom_volume(const PhantomSpec& spec, PhasePair phases);

/// Smooth complex sensitivities around the field of view, normalized so that
/// sum_c |S_c|^2 = 1 at every pixel.
CoilMaps make_coil_maps(int height, int width, int coils);

}  // namespace vstorm
