#include "vstorm/generator/presets.hpp"

#include <cmath>
#include <limits>

#include "vstorm/common/errors.hpp"

namespace vstorm {

GeneratorSpec mnist_preset(int latent_dim, int hidden_channels) {
  GeneratorSpec s;
  s.latent_dim = latent_dim;
  s.slices = 1;
  s.channels_per_slice = 1;
  s.height = 28;
  s.width = 28;
  LayerSpec dense{LayerKind::dense, latent_dim, 8, 1, 1, Activation::leaky_relu, 0.1, 7, 7};
  LayerSpec up1{LayerKind::transposed_convolution, 8, hidden_channels, 4, 2, Activation::leaky_relu, 0.1, 0, 0};
  LayerSpec up2{LayerKind::transposed_convolution, hidden_channels, 1, 4, 2, Activation::tanh, 0.1, 0, 0};
  s.layers = {dense, up1, up2};
  return s;
}

namespace {

GeneratorSpec mri_with_width(int latent_dim, int height, int width, int slices, int w) {
  GeneratorSpec s;
  s.latent_dim = latent_dim;
  s.slices = slices;
  s.channels_per_slice = 2;
  s.height = height;
  s.width = width;
  const int ch[5] = {4 * w, 4 * w, 3 * w, 2 * w, w};
  auto leaky = Activation::leaky_relu;
  s.layers.push_back({LayerKind::dense, latent_dim, ch[0], 1, 1, leaky, 0.1, height / 16, width / 16});
  for (int i = 0; i < 4; ++i) {
    s.layers.push_back({LayerKind::convolution, ch[i], ch[i], 3, 1, leaky, 0.1, 0, 0});
    s.layers.push_back({LayerKind::transposed_convolution, ch[i], ch[i + 1], 4, 2, leaky, 0.1, 0, 0});
  }
  s.layers.push_back({LayerKind::convolution, ch[4], 2 * slices, 3, 1, Activation::tanh, 0.1, 0, 0});
  return s;
}

}  // namespace

GeneratorSpec mri_preset(int latent_dim, int height, int width, int slices, int channel_width,
                         double params_per_output) {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
    throw ShapeError("cine decoder needs a grid divisible by 16, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  if (slices <= 0) throw ShapeError("cine decoder needs at least one slice");
  if (channel_width > 0) return mri_with_width(latent_dim, height, width, slices, channel_width);
  const double target = params_per_output * 2.0 * slices * height * width;
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int w = 1; w <= 64; ++w) {
    const double gap =
        std::abs(static_cast<double>(parameter_count_of(mri_with_width(latent_dim, height, width, slices, w))) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = w;
    }
  }
  return mri_with_width(latent_dim, height, width, slices, best);
}

std::size_t parameter_count_of(const GeneratorSpec& spec) {
  std::size_t total = 0;
  int c = spec.latent_dim;
  int h = spec.input_height, w = spec.input_width;
  for (const auto& l : spec.layers) {
    const std::size_t kk = static_cast<std::size_t>(l.kernel) * l.kernel;
    switch (l.kind) {
      case LayerKind::dense: {
        const std::size_t out = static_cast<std::size_t>(l.out_channels) * l.out_height * l.out_width;
        total += static_cast<std::size_t>(c) * h * w * out + out;
        h = l.out_height;
        w = l.out_width;
        break;
      }
      case LayerKind::convolution: total += static_cast<std::size_t>(c) * l.out_channels * kk + l.out_channels; break;
      case LayerKind::upsample_convolution:
        total += static_cast<std::size_t>(c) * l.out_channels * kk + l.out_channels;
        h *= l.stride;
        w *= l.stride;
        break;
      case LayerKind::transposed_convolution: {
        total += static_cast<std::size_t>(c) * l.out_channels * kk + l.out_channels;
        const int p = (l.kernel - l.stride) / 2;
        h = (h - 1) * l.stride - 2 * p + l.kernel;
        w = (w - 1) * l.stride - 2 * p + l.kernel;
        break;
      }
    }
    c = l.out_channels;
  }
  return total;
}

}  // namespace vstorm
