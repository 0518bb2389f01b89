#pragma once

// Measured frames b(z, t) with their operators, plus acquisition metadata and
// (for synthetic data) ground truth.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vstorm/common/binary_io.hpp"
#include "vstorm/data/phantom.hpp"
#include "vstorm/measurement/ensemble.hpp"
#include "vstorm/measurement/operators.hpp"

namespace vstorm {

struct KTFrame {
  int slice = 0;
  int time = 0;
  MeasurementOperator op;
  MeasurementVector b;
  double noise_sd = 0.0;
};

struct KTDataset {
  std::string kind;         // "phantom" or "digits"
  OperatorGeometry geometry;  // slices x channels x height x width of the object
  int frames_per_slice = 0;
  std::uint64_t seed = 0;
  std::vector<KTFrame> frames;  // slice-major: index z * frames_per_slice + t
  std::vector<ImageGrid> truth;  // per frame when synthetic, else empty
  std::optional<PhantomSpec> phantom;

  int slices() const { return geometry.slices; }
  std::size_t frame_count() const { return frames.size(); }
  int index(int z, int t) const;
  const KTFrame& frame(int z, int t) const { return frames[index(z, t)]; }
  bool has_truth() const { return !truth.empty(); }
};

/// Checks frame ordering, operator geometry and every b length; errors name the frame.
void validate(const KTDataset& ds);

/// Simulated acquisition: one fresh operator per frame, b = A x + noise.
/// Single-slice phantoms use the ensemble's operator directly; multislice
/// phantoms wrap it in a slice-extraction operator.
KTDataset acquire_kt(const PhantomSpec& spec, const OperatorEnsemble& ensemble, double noise_sd, std::uint64_t seed);

/// Noise level giving the requested measurement SNR (dB), measured as
/// rms(Ax) / sd over all noiseless frames of the acquisition.
double noise_sd_for_snr(const PhantomSpec& spec, const OperatorEnsemble& ensemble, double snr_db, std::uint64_t seed);

/// Zero-filled estimate of frame i: adjoint(A, b) / scale^2.
ImageGrid zero_filled(const KTFrame& frame);

void save_dataset(const KTDataset& ds, const std::filesystem::path& path);
KTDataset load_dataset(const std::filesystem::path& path);

/// Operator records shared with checkpoints and datasets.
void write_operator(ByteWriter& out, const MeasurementOperator& op);
MeasurementOperator read_operator(ByteReader& in, const std::shared_ptr<const CoilMaps>& coils);
void write_phantom_spec(ByteWriter& out, const PhantomSpec& spec);
PhantomSpec read_phantom_spec(ByteReader& in);

}  // namespace vstorm
