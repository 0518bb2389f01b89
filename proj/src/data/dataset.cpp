#include "vstorm/data/dataset.hpp"

#include <cmath>
#include <random>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"

namespace vstorm {

int KTDataset::index(int z, int t) const {
  if (z < 0 || z >= slices()) throw ShapeError("slice " + std::to_string(z) + " out of range");
  if (t < 0 || t >= frames_per_slice) throw ShapeError("time " + std::to_string(t) + " out of range");
  return z * frames_per_slice + t;
}

void validate(const KTDataset& ds) {
  if (ds.frames.size() != static_cast<std::size_t>(ds.slices()) * ds.frames_per_slice)
    throw ShapeError("dataset holds " + std::to_string(ds.frames.size()) + " frames, expected " +
                     std::to_string(ds.slices()) + " x " + std::to_string(ds.frames_per_slice));
  if (ds.has_truth() && ds.truth.size() != ds.frames.size()) throw ShapeError("ground truth count differs from frames");
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& f = ds.frames[i];
    const std::string name = "frame " + std::to_string(i) + " (slice " + std::to_string(f.slice) + ", time " +
                             std::to_string(f.time) + ")";
    if (ds.index(f.slice, f.time) != static_cast<int>(i)) throw ShapeError(name + " is out of order");
    const auto g = geometry(f.op);
    if (g.channels != ds.geometry.channels || g.height != ds.geometry.height || g.width != ds.geometry.width)
      throw ShapeError(name + ": operator acts on " + std::to_string(g.channels) + "x" + std::to_string(g.height) + "x" +
                       std::to_string(g.width) + " but the dataset grid is " + std::to_string(ds.geometry.channels) +
                       "x" + std::to_string(ds.geometry.height) + "x" + std::to_string(ds.geometry.width));
    if (target_slice(f.op) != f.slice) throw ShapeError(name + ": operator reads slice " + std::to_string(target_slice(f.op)));
    if (f.b.size() != measurement_size(f.op))
      throw ShapeError(name + ": b has " + std::to_string(f.b.size()) + " values, operator produces " +
                       std::to_string(measurement_size(f.op)));
    if (ds.has_truth() && ds.truth[i].size() != ds.geometry.slice_size())
      throw ShapeError(name + ": ground truth has the wrong size");
  }
}

namespace {

KTDataset acquire_noiseless(const PhantomSpec& spec, const OperatorEnsemble& ensemble, std::uint64_t seed) {
  validate(spec);
  const auto g = ensemble_geometry(ensemble);
  if (g.height != spec.height || g.width != spec.width || g.channels != 2)
    throw ShapeError("ensemble grid does not match the phantom grid");
  KTDataset ds;
  ds.kind = "phantom";
  ds.geometry = {spec.slices, 2, spec.height, spec.width};
  ds.frames_per_slice = spec.frames;
  ds.seed = seed;
  ds.phantom = spec;
  for (int z = 0; z < spec.slices; ++z)
    for (int t = 0; t < spec.frames; ++t) {
      Rng rng(derive_seed(seed, {0x6f70, static_cast<std::uint64_t>(z), static_cast<std::uint64_t>(t)}));
      MeasurementOperator op = draw(ensemble, rng);
      if (spec.slices > 1) {
        const auto* inner = std::get_if<SubsampledFourierOperator>(&op);
        if (!inner) throw ShapeError("multislice acquisition needs a Fourier-row ensemble");
        op = SliceFourierOperator(z, spec.slices, *inner);
      }
      auto truth = phantom_generate(spec, z, t);
      KTFrame f{z, t, op, {}, 0.0};
      f.b.resize(measurement_size(op));
      apply_slice(op, truth.values, f.b);
      ds.frames.push_back(std::move(f));
      ds.truth.push_back(std::move(truth));
    }
  return ds;
}

double measurement_rms(const KTDataset& ds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : ds.frames) {
    for (double v : f.b) sum += v * v;
    n += f.b.size();
  }
  return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace

KTDataset acquire_kt(const PhantomSpec& spec, const OperatorEnsemble& ensemble, double noise_sd, std::uint64_t seed) {
  if (!(noise_sd >= 0)) throw UsageError("noise level must be non-negative");
  auto ds = acquire_noiseless(spec, ensemble, seed);
  if (noise_sd > 0)
    for (auto& f : ds.frames) {
      Rng rng(derive_seed(seed, {0x6e6f, static_cast<std::uint64_t>(f.slice), static_cast<std::uint64_t>(f.time)}));
      std::normal_distribution<double> normal(0.0, noise_sd);
      for (auto& v : f.b) v += normal(rng);
    }
  for (auto& f : ds.frames) f.noise_sd = noise_sd;
  validate(ds);
  return ds;
}

double noise_sd_for_snr(const PhantomSpec& spec, const OperatorEnsemble& ensemble, double snr_db, std::uint64_t seed) {
  return measurement_rms(acquire_noiseless(spec, ensemble, seed)) / std::pow(10.0, snr_db / 20.0);
}

ImageGrid zero_filled(const KTFrame& frame) {
  const auto g = geometry(frame.op);
  ImageGrid img(g.height, g.width, g.channels);
  adjoint_slice(frame.op, frame.b, img.values);
  const double s = operator_scale(frame.op);
  for (auto& v : img.values) v /= s * s;
  return img;
}

// ---- persistence ----

namespace {

enum : std::uint8_t { op_mask = 1, op_fourier = 2, op_slice_fourier = 3 };

void write_fourier(ByteWriter& out, const SubsampledFourierOperator& f) {
  const auto g = f.geometry();
  out.i32(g.height);
  out.i32(g.width);
  out.u32_array(f.kept_rows());
  out.f64(f.scale());
  out.u8(f.coil_maps() ? 1 : 0);
}

SubsampledFourierOperator read_fourier(ByteReader& in, const std::shared_ptr<const CoilMaps>& coils) {
  const int h = in.i32(), w = in.i32();
  auto rows = in.u32_array();
  const double scale = in.f64();
  const bool uses_coils = in.u8() != 0;
  if (uses_coils && !coils) in.fail("operator refers to coil maps but none are stored");
  try {
    return SubsampledFourierOperator(h, w, std::move(rows), scale, uses_coils ? coils : nullptr);
  } catch (const Error& e) {
    in.fail(std::string("invalid Fourier operator: ") + e.what());
  }
}

void write_coils(ByteWriter& out, const CoilMaps& c) {
  out.i32(c.coils);
  out.i32(c.height);
  out.i32(c.width);
  out.f64_array(c.values);
}

std::shared_ptr<const CoilMaps> read_coils(ByteReader& in) {
  auto c = std::make_shared<CoilMaps>();
  c->coils = in.i32();
  c->height = in.i32();
  c->width = in.i32();
  c->values = in.f64_array();
  if (c->coils <= 0 || c->values.size() != static_cast<std::size_t>(2) * c->coils * c->height * c->width)
    in.fail("coil map block is inconsistent");
  return c;
}

void write_ellipse(ByteWriter& out, const Ellipse& e) {
  for (double v : {e.cx, e.cy, e.rx, e.ry, e.intensity}) out.f64(v);
}

Ellipse read_ellipse(ByteReader& in) {
  Ellipse e;
  for (double* v : {&e.cx, &e.cy, &e.rx, &e.ry, &e.intensity}) *v = in.f64();
  return e;
}

}  // namespace

void write_operator(ByteWriter& out, const MeasurementOperator& op) {
  if (const auto* m = std::get_if<PixelMaskOperator>(&op)) {
    out.u8(op_mask);
    const auto g = m->geometry();
    out.i32(g.height);
    out.i32(g.width);
    out.i32(g.channels);
    out.u32_array(m->kept());
    out.f64(m->scale());
  } else if (const auto* f = std::get_if<SubsampledFourierOperator>(&op)) {
    out.u8(op_fourier);
    write_fourier(out, *f);
  } else {
    const auto& s = std::get<SliceFourierOperator>(op);
    out.u8(op_slice_fourier);
    out.i32(s.slice_index());
    out.i32(s.slice_count());
    write_fourier(out, s.inner());
  }
}

MeasurementOperator read_operator(ByteReader& in, const std::shared_ptr<const CoilMaps>& coils) {
  const auto kind = in.u8();
  switch (kind) {
    case op_mask: {
      const int h = in.i32(), w = in.i32(), c = in.i32();
      auto kept = in.u32_array();
      const double scale = in.f64();
      try {
        return PixelMaskOperator(h, w, c, std::move(kept), scale);
      } catch (const Error& e) {
        in.fail(std::string("invalid pixel mask: ") + e.what());
      }
    }
    case op_fourier: return read_fourier(in, coils);
    case op_slice_fourier: {
      const int z = in.i32(), n = in.i32();
      auto inner = read_fourier(in, coils);
      try {
        return SliceFourierOperator(z, n, std::move(inner));
      } catch (const Error& e) {
        in.fail(std::string("invalid slice operator: ") + e.what());
      }
    }
    default: in.fail("unknown operator kind code " + std::to_string(kind));
  }
}

void write_phantom_spec(ByteWriter& out, const PhantomSpec& s) {
  out.i32(s.height);
  out.i32(s.width);
  out.i32(s.slices);
  out.i32(s.frames);
  for (double v : {s.cardiac_frequency, s.respiratory_frequency, s.cardiac_amplitude, s.respiratory_amplitude,
                   s.edge_width})
    out.f64(v);
  out.f64_array(s.cardiac_offset);
  out.f64_array(s.respiratory_offset);
  out.u32(static_cast<std::uint32_t>(s.anatomy.size()));
  for (const auto& a : s.anatomy) {
    for (const Ellipse* e : std::initializer_list<const Ellipse*>{&a.body, &a.left_lung, &a.right_lung, &a.myocardium, &a.blood_pool}) write_ellipse(out, *e);
    out.f64(a.phase_ramp);
  }
}

PhantomSpec read_phantom_spec(ByteReader& in) {
  PhantomSpec s;
  s.height = in.i32();
  s.width = in.i32();
  s.slices = in.i32();
  s.frames = in.i32();
  for (double* v : {&s.cardiac_frequency, &s.respiratory_frequency, &s.cardiac_amplitude, &s.respiratory_amplitude,
                    &s.edge_width})
    *v = in.f64();
  s.cardiac_offset = in.f64_array();
  s.respiratory_offset = in.f64_array();
  const auto n = in.u32();
  if (n > 100000) in.fail("implausible anatomy count");
  for (std::uint32_t i = 0; i < n; ++i) {
    SliceAnatomy a;
    for (Ellipse* e : {&a.body, &a.left_lung, &a.right_lung, &a.myocardium, &a.blood_pool}) *e = read_ellipse(in);
    a.phase_ramp = in.f64();
    s.anatomy.push_back(a);
  }
  try {
    validate(s);
  } catch (const Error& e) {
    in.fail(std::string("invalid phantom description: ") + e.what());
  }
  return s;
}

void save_dataset(const KTDataset& ds, const std::filesystem::path& path) {
  validate(ds);
  ByteWriter out;
  out.raw("VKTD");
  out.u32(1);
  out.str(ds.kind);
  out.i32(ds.geometry.slices);
  out.i32(ds.geometry.channels);
  out.i32(ds.geometry.height);
  out.i32(ds.geometry.width);
  out.i32(ds.frames_per_slice);
  out.u64(ds.seed);

  // Coil maps are shared by every Fourier operator; store them once.
  std::shared_ptr<const CoilMaps> coils;
  for (const auto& f : ds.frames) {
    const SubsampledFourierOperator* four = std::get_if<SubsampledFourierOperator>(&f.op);
    if (const auto* s = std::get_if<SliceFourierOperator>(&f.op)) four = &s->inner();
    if (four && four->coil_maps()) {
      if (coils && coils != four->coil_maps()) throw Error("frames use different coil maps; cannot store dataset");
      coils = four->coil_maps();
    }
  }
  out.u8(coils ? 1 : 0);
  if (coils) write_coils(out, *coils);

  out.u32(static_cast<std::uint32_t>(ds.frames.size()));
  for (const auto& f : ds.frames) {
    out.i32(f.slice);
    out.i32(f.time);
    out.f64(f.noise_sd);
    write_operator(out, f.op);
    out.f64_array(f.b);
  }
  out.u8(ds.has_truth() ? 1 : 0);
  if (ds.has_truth())
    for (const auto& t : ds.truth) out.f64_array(t.values);
  out.u8(ds.phantom ? 1 : 0);
  if (ds.phantom) write_phantom_spec(out, *ds.phantom);
  out.save_with_checksum(path);
}

KTDataset load_dataset(const std::filesystem::path& path) {
  auto in = ByteReader::load_with_checksum(path, "dataset");
  in.expect_magic("VKTD");
  const auto version = in.u32();
  if (version != 1) in.fail("unsupported dataset version " + std::to_string(version));
  KTDataset ds;
  ds.kind = in.str();
  ds.geometry.slices = in.i32();
  ds.geometry.channels = in.i32();
  ds.geometry.height = in.i32();
  ds.geometry.width = in.i32();
  ds.frames_per_slice = in.i32();
  ds.seed = in.u64();
  if (ds.geometry.slices <= 0 || ds.geometry.channels <= 0 || ds.geometry.height <= 0 || ds.geometry.width <= 0 ||
      ds.frames_per_slice <= 0)
    in.fail("invalid dataset dimensions");
  std::shared_ptr<const CoilMaps> coils;
  if (in.u8()) coils = read_coils(in);
  const auto n = in.u32();
  if (n != static_cast<std::uint64_t>(ds.geometry.slices) * ds.frames_per_slice)
    in.fail("frame table has " + std::to_string(n) + " entries");
  ds.frames.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    KTFrame f{in.i32(), in.i32(), PixelMaskOperator(1, 1, 1, {}), {}, 0.0};
    f.noise_sd = in.f64();
    f.op = read_operator(in, coils);
    f.b = in.f64_array();
    ds.frames.push_back(std::move(f));
  }
  if (in.u8()) {
    for (std::uint32_t i = 0; i < n; ++i) {
      ImageGrid g(ds.geometry.height, ds.geometry.width, ds.geometry.channels);
      auto v = in.f64_array();
      if (v.size() != g.size()) in.fail("ground truth frame " + std::to_string(i) + " has the wrong size");
      g.values = std::move(v);
      ds.truth.push_back(std::move(g));
    }
  }
  if (in.u8()) ds.phantom = read_phantom_spec(in);
  if (!in.at_end()) in.fail("trailing bytes after dataset");
  try {
    validate(ds);
  } catch (const Error& e) {
    in.fail(e.what());
  }
  return ds;
}

}  // namespace vstorm
