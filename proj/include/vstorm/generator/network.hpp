#pragma once

// Convolutional decoder mapping a latent vector to an image or a stack of
// slices. Parameters live in one flat array; layers view into it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vstorm/common/binary_io.hpp"
#include "vstorm/measurement/grid.hpp"
#include "vstorm/measurement/operators.hpp"

namespace vstorm {

enum class LayerKind { dense, convolution, transposed_convolution, upsample_convolution };
enum class Activation { leaky_relu, tanh, none };

const char* layer_kind_name(LayerKind k);
const char* activation_name(Activation a);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::convolution;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Activation activation = Activation::leaky_relu;
  double slope = 0.1;
  // dense only: output is reshaped to out_channels x out_height x out_width
  int out_height = 0;
  int out_width = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct GeneratorSpec {
  int latent_dim = 2;
  // The latent vector is broadcast over an input_height x input_width grid.
  int input_height = 1;
  int input_width = 1;
  // Declared output: slices x channels_per_slice channels on a height x width grid.
  int slices = 1;
  int channels_per_slice = 1;
  int height = 0;
  int width = 0;
  std::vector<LayerSpec> layers;
  // Weights start uniform in +-init_scale * sqrt(1 / fan_in); biases at zero.
  double init_scale = 1e-2;

  bool operator==(const GeneratorSpec&) const = default;
};

struct TensorShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

/// True when hidden layers use the leaky rectifier and the last uses tanh.
bool follows_activation_convention(const GeneratorSpec& spec);

class GeneratorNetwork {
 public:
  /// Validates layer chaining and draws the initial parameters from `seed`.
  GeneratorNetwork(GeneratorSpec spec, std::uint64_t seed);

  const GeneratorSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  int latent_dim() const { return spec_.latent_dim; }
  int layer_count() const { return static_cast<int>(spec_.layers.size()); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  TensorShape input_shape(int layer) const { return shapes_[layer]; }
  TensorShape output_shape(int layer) const { return shapes_[layer + 1]; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t weight_count(int layer) const;
  std::size_t bias_offset(int layer) const { return offsets_[layer] + weight_count(layer); }

  OperatorGeometry output_geometry() const {
    return {spec_.slices, spec_.channels_per_slice, spec_.height, spec_.width};
  }

 private:
  GeneratorSpec spec_;
  std::uint64_t seed_;
  std::vector<TensorShape> shapes_;   // layers + 1 entries
  std::vector<std::size_t> offsets_;  // per layer
  std::vector<double> params_;
};

GeneratorNetwork init_generator(const GeneratorSpec& spec, std::uint64_t seed);

/// Generator section of a checkpoint: layer specs, seed, theta.
void write_generator(ByteWriter& out, const GeneratorNetwork& net);
GeneratorNetwork read_generator(ByteReader& in);

/// Activations kept from a forward pass, plus scratch reused by backward.
/// One tape per thread.
class ForwardTape {
 public:
  /// Output of the last forward pass: either the whole volume or the requested slice.
  std::span<const double> output() const { return post_.back(); }
  int slice() const { return slice_; }

 private:
  friend std::span<const double> forward(const GeneratorNetwork&, std::span<const double>, ForwardTape&, int);
  friend void backward(const GeneratorNetwork&, ForwardTape&, std::span<const double>, std::span<double>,
                       std::span<double>);

  std::vector<double> latent_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> post_;  // post_[0] is the broadcast input
  std::vector<std::vector<double>> cols_;
  std::vector<double> grad_a_, grad_b_, grad_cols_;
  int slice_ = -1;
};

/// Forward pass. With slice >= 0 only that slice's channels are produced by the
/// last layer (the only part a single-slice measurement reads).
std::span<const double> forward(const GeneratorNetwork& net, std::span<const double> latent, ForwardTape& tape,
                                int slice = -1);

/// Convenience: full output as a volume.
VolumeGrid forward(const GeneratorNetwork& net, std::span<const double> latent);

/// Reverse pass for <output, upstream>. Gradients are accumulated into d_theta
/// (size parameter_count) and written to d_latent (size latent_dim).
void backward(const GeneratorNetwork& net, ForwardTape& tape, std::span<const double> upstream,
              std::span<double> d_theta, std::span<double> d_latent);

struct GradientBundle {
  std::vector<double> d_theta;
  std::vector<double> d_latent;
};

/// Gradients of <forward(net, latent), upstream> with respect to theta and the latent.
GradientBundle backward(const GeneratorNetwork& net, std::span<const double> latent, std::span<const double> upstream);

struct PenaltyValue {
  double value = 0.0;
  std::vector<double> gradient;
};

/// (sum |theta_k|)^2 and its gradient 2 (sum |theta_k|) sign(theta), sign(0) = 0.
PenaltyValue l1sq_penalty(std::span<const double> theta);
/// Plain sum |theta_k| (ablation option).
PenaltyValue l1_penalty(std::span<const double> theta);

}  // namespace vstorm
