#include "vstorm/generator/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vstorm/common/errors.hpp"
#include "vstorm/common/rng.hpp"
#include "vstorm/simd/kernels.hpp"

namespace vstorm {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::convolution: return "convolution";
    case LayerKind::transposed_convolution: return "transposed-convolution";
    case LayerKind::upsample_convolution: return "upsample-convolution";
  }
  return "?";
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::leaky_relu: return "leaky-relu";
    case Activation::tanh: return "tanh";
    case Activation::none: return "none";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::dense, LayerKind::convolution, LayerKind::transposed_convolution,
                 LayerKind::upsample_convolution})
    if (s == layer_kind_name(k)) return k;
  throw ParseError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  for (auto a : {Activation::leaky_relu, Activation::tanh, Activation::none})
    if (s == activation_name(a)) return a;
  throw ParseError("unknown activation '" + s + "'");
}

bool follows_activation_convention(const GeneratorSpec& spec) {
  if (spec.layers.empty()) return false;
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i)
    if (spec.layers[i].activation != Activation::leaky_relu) return false;
  return spec.layers.back().activation == Activation::tanh;
}

namespace {

std::string layer_label(const GeneratorSpec& spec, std::size_t i) {
  return "layer " + std::to_string(i) + " (" + layer_kind_name(spec.layers[i].kind) + ")";
}

int tconv_padding(const LayerSpec& l) { return (l.kernel - l.stride) / 2; }

TensorShape output_of(const LayerSpec& l, TensorShape in) {
  switch (l.kind) {
    case LayerKind::dense: return {l.out_channels, l.out_height, l.out_width};
    case LayerKind::convolution: return {l.out_channels, in.height, in.width};
    case LayerKind::upsample_convolution: return {l.out_channels, in.height * l.stride, in.width * l.stride};
    case LayerKind::transposed_convolution: {
      const int p = tconv_padding(l);
      return {l.out_channels, (in.height - 1) * l.stride - 2 * p + l.kernel,
              (in.width - 1) * l.stride - 2 * p + l.kernel};
    }
  }
  return {};
}

std::size_t weights_of(const LayerSpec& l, TensorShape in) {
  const std::size_t kk = static_cast<std::size_t>(l.kernel) * l.kernel;
  switch (l.kind) {
    case LayerKind::dense: return in.size() * static_cast<std::size_t>(l.out_channels) * l.out_height * l.out_width;
    case LayerKind::convolution:
    case LayerKind::upsample_convolution:
    case LayerKind::transposed_convolution: return static_cast<std::size_t>(l.in_channels) * l.out_channels * kk;
  }
  return 0;
}

std::size_t biases_of(const LayerSpec& l) {
  return l.kind == LayerKind::dense ? static_cast<std::size_t>(l.out_channels) * l.out_height * l.out_width
                                    : static_cast<std::size_t>(l.out_channels);
}

double fan_in(const LayerSpec& l, TensorShape in) {
  const double kk = static_cast<double>(l.kernel) * l.kernel;
  switch (l.kind) {
    case LayerKind::dense: return static_cast<double>(in.size());
    case LayerKind::convolution:
    case LayerKind::upsample_convolution: return l.in_channels * kk;
    case LayerKind::transposed_convolution: return l.in_channels * kk / (static_cast<double>(l.stride) * l.stride);
  }
  return 1.0;
}

}  // namespace

GeneratorNetwork::GeneratorNetwork(GeneratorSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  if (spec_.latent_dim <= 0) throw ShapeError("latent_dim must be positive");
  if (spec_.input_height <= 0 || spec_.input_width <= 0) throw ShapeError("input grid must be non-empty");
  if (spec_.layers.empty()) throw ShapeError("generator needs at least one layer");
  shapes_.push_back({spec_.latent_dim, spec_.input_height, spec_.input_width});
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const auto in = shapes_.back();
    if (l.in_channels != in.channels) {
      if (i == 0)
        throw ShapeError(layer_label(spec_, 0) + " expects " + std::to_string(l.in_channels) +
                         " input channels but latent_dim is " + std::to_string(spec_.latent_dim));
      throw ShapeError(layer_label(spec_, i - 1) + " outputs " + std::to_string(in.channels) + " channels but " +
                       layer_label(spec_, i) + " expects " + std::to_string(l.in_channels));
    }
    if (l.out_channels <= 0) throw ShapeError(layer_label(spec_, i) + " has no output channels");
    switch (l.kind) {
      case LayerKind::dense:
        if (l.out_height <= 0 || l.out_width <= 0) throw ShapeError(layer_label(spec_, i) + " needs a reshape target");
        break;
      case LayerKind::convolution:
        if (l.kernel <= 0 || l.kernel % 2 == 0 || l.stride != 1)
          throw ShapeError(layer_label(spec_, i) + " needs an odd kernel and stride 1");
        break;
      case LayerKind::upsample_convolution:
        if (l.kernel <= 0 || l.kernel % 2 == 0 || l.stride < 1)
          throw ShapeError(layer_label(spec_, i) + " needs an odd kernel and a positive upsampling factor");
        break;
      case LayerKind::transposed_convolution:
        if (l.stride < 1 || l.kernel < l.stride || (l.kernel - l.stride) % 2 != 0)
          throw ShapeError(layer_label(spec_, i) + " needs kernel >= stride with kernel - stride even");
        break;
    }
    const auto out = output_of(l, in);
    if (out.height <= 0 || out.width <= 0) throw ShapeError(layer_label(spec_, i) + " produces an empty grid");
    offsets_.push_back(params_.size());
    params_.resize(params_.size() + weights_of(l, in) + biases_of(l), 0.0);
    shapes_.push_back(out);
  }
  const auto last = shapes_.back();
  if (spec_.slices <= 0 || spec_.channels_per_slice <= 0 ||
      last.channels != spec_.slices * spec_.channels_per_slice)
    throw ShapeError("last layer outputs " + std::to_string(last.channels) + " channels but the declared output has " +
                     std::to_string(spec_.slices) + " slices x " + std::to_string(spec_.channels_per_slice) +
                     " channels");
  if (last.height != spec_.height || last.width != spec_.width)
    throw ShapeError("last layer outputs " + std::to_string(last.height) + "x" + std::to_string(last.width) +
                     " but the declared output is " + std::to_string(spec_.height) + "x" + std::to_string(spec_.width));

  Rng rng(derive_seed(seed, {0x6e6574}));
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const double half = spec_.init_scale * std::sqrt(1.0 / fan_in(spec_.layers[i], shapes_[i]));
    std::uniform_real_distribution<double> u(-half, half);
    const auto w = weight_count(static_cast<int>(i));
    for (std::size_t k = 0; k < w; ++k) params_[offsets_[i] + k] = u(rng);
  }
}

std::size_t GeneratorNetwork::weight_count(int layer) const {
  return weights_of(spec_.layers[layer], shapes_[layer]);
}

GeneratorNetwork init_generator(const GeneratorSpec& spec, std::uint64_t seed) { return GeneratorNetwork(spec, seed); }

namespace {

// cols[(c, ky, kx)][y * w + x] = in[c][y + ky - pad][x + kx - pad], zero outside.
void im2col(const double* in, int channels, int h, int w, int k, double* cols) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        const double* src = in + c * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          double* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const int x0 = std::max(0, pad - kx), x1 = std::min(w, w + pad - kx);
          std::fill(dst, dst + x0, 0.0);
          std::copy(src + static_cast<std::size_t>(sy) * w + x0 + kx - pad,
                    src + static_cast<std::size_t>(sy) * w + x1 + kx - pad, dst + x0);
          std::fill(dst + x1, dst + w, 0.0);
        }
      }
}

// Adjoint of im2col: accumulates into `in` (which must be zeroed by the caller).
void col2im(const double* cols, int channels, int h, int w, int k, double* in) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        double* dst = in + c * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx), x1 = std::min(w, w + pad - kx);
          const double* src = row + static_cast<std::size_t>(y) * w;
          double* d = dst + static_cast<std::size_t>(sy) * w + kx - pad;
          for (int x = x0; x < x1; ++x) d[x] += src[x];
        }
      }
}

// Transposed-convolution scatter: out[o][y*s - p + ky][x*s - p + kx] += cols[(o, ky, kx)][y, x].
void tconv_scatter(const double* cols, int out_channels, int h, int w, int k, int s, int p, int oh, int ow,
                   double* out) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int o = 0; o < out_channels; ++o)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(o) * k * k + ky * k + kx) * in_plane;
        double* dst = out + o * out_plane;
        for (int y = 0; y < h; ++y) {
          const int oy = y * s - p + ky;
          if (oy < 0 || oy >= oh) continue;
          for (int x = 0; x < w; ++x) {
            const int ox = x * s - p + kx;
            if (ox < 0 || ox >= ow) continue;
            dst[static_cast<std::size_t>(oy) * ow + ox] += row[static_cast<std::size_t>(y) * w + x];
          }
        }
      }
}

// Adjoint of tconv_scatter: gathers the output gradient into column form.
void tconv_gather(const double* g, int out_channels, int h, int w, int k, int s, int p, int oh, int ow, double* cols) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int o = 0; o < out_channels; ++o)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(o) * k * k + ky * k + kx) * in_plane;
        const double* src = g + o * out_plane;
        for (int y = 0; y < h; ++y) {
          const int oy = y * s - p + ky;
          for (int x = 0; x < w; ++x) {
            const int ox = x * s - p + kx;
            row[static_cast<std::size_t>(y) * w + x] =
                (oy < 0 || oy >= oh || ox < 0 || ox >= ow) ? 0.0 : src[static_cast<std::size_t>(oy) * ow + ox];
          }
        }
      }
}

void upsample_nearest(const double* in, int channels, int h, int w, int s, double* out) {
  const int oh = h * s, ow = w * s;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out[(static_cast<std::size_t>(c) * oh + y) * ow + x] = in[(static_cast<std::size_t>(c) * h + y / s) * w + x / s];
}

void upsample_nearest_adjoint(const double* g, int channels, int h, int w, int s, double* in) {
  const int oh = h * s, ow = w * s;
  std::fill(in, in + static_cast<std::size_t>(channels) * h * w, 0.0);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        in[(static_cast<std::size_t>(c) * h + y / s) * w + x / s] += g[(static_cast<std::size_t>(c) * oh + y) * ow + x];
}

void activate(const LayerSpec& l, const std::vector<double>& pre, std::vector<double>& post) {
  post.resize(pre.size());
  switch (l.activation) {
    case Activation::none: std::copy(pre.begin(), pre.end(), post.begin()); break;
    case Activation::tanh:
      for (std::size_t i = 0; i < pre.size(); ++i) post[i] = std::tanh(pre[i]);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : l.slope * pre[i];
      break;
  }
}

// In place: g <- g * act'(pre).
void activation_backward(const LayerSpec& l, const std::vector<double>& pre, const std::vector<double>& post,
                         std::vector<double>& g) {
  switch (l.activation) {
    case Activation::none: break;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - post[i] * post[i];
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pre[i] > 0.0 ? 1.0 : l.slope;
      break;
  }
}

struct ChannelRange {
  int first;
  int count;
};

}  // namespace

std::span<const double> forward(const GeneratorNetwork& net, std::span<const double> latent, ForwardTape& tape,
                                int slice) {
  const auto& spec = net.spec();
  if (static_cast<int>(latent.size()) != spec.latent_dim)
    throw ShapeError("latent vector has length " + std::to_string(latent.size()) + ", generator expects " +
                     std::to_string(spec.latent_dim));
  if (slice >= spec.slices) throw ShapeError("slice " + std::to_string(slice) + " out of range for generator output");
  const auto& kt = simd::kernels();
  const int n_layers = net.layer_count();
  tape.slice_ = slice;
  tape.latent_.assign(latent.begin(), latent.end());
  tape.pre_.resize(n_layers);
  tape.post_.resize(n_layers + 1);
  tape.cols_.resize(n_layers);

  const auto in0 = net.input_shape(0);
  auto& x0 = tape.post_[0];
  x0.resize(in0.size());
  for (int c = 0; c < in0.channels; ++c)
    std::fill(x0.begin() + c * in0.plane(), x0.begin() + (c + 1) * in0.plane(), latent[c]);

  const auto params = net.params();
  for (int li = 0; li < n_layers; ++li) {
    const auto& l = spec.layers[li];
    const auto in = net.input_shape(li);
    const auto out = net.output_shape(li);
    const bool last = li == n_layers - 1;
    const ChannelRange range = (last && slice >= 0) ? ChannelRange{slice * spec.channels_per_slice, spec.channels_per_slice}
                                                    : ChannelRange{0, out.channels};
    const double* w = params.data() + net.weight_offset(li);
    const double* bias = params.data() + net.bias_offset(li);
    const double* x = tape.post_[li].data();
    auto& pre = tape.pre_[li];
    pre.assign(static_cast<std::size_t>(range.count) * out.plane(), 0.0);

    switch (l.kind) {
      case LayerKind::dense: {
        const int nin = static_cast<int>(in.size());
        const std::size_t r0 = static_cast<std::size_t>(range.first) * out.plane();
        kt.gemm_nn(static_cast<int>(pre.size()), 1, nin, w + r0 * nin, nin, x, 1, pre.data(), 1);
        for (std::size_t r = 0; r < pre.size(); ++r) pre[r] += bias[r0 + r];
        break;
      }
      case LayerKind::convolution:
      case LayerKind::upsample_convolution: {
        const double* src = x;
        int h = in.height, wd = in.width;
        if (l.kind == LayerKind::upsample_convolution) {
          tape.grad_a_.resize(static_cast<std::size_t>(in.channels) * out.plane());
          upsample_nearest(x, in.channels, in.height, in.width, l.stride, tape.grad_a_.data());
          src = tape.grad_a_.data();
          h = out.height;
          wd = out.width;
        }
        const int kdim = l.in_channels * l.kernel * l.kernel;
        auto& cols = tape.cols_[li];
        cols.resize(static_cast<std::size_t>(kdim) * out.plane());
        im2col(src, in.channels, h, wd, l.kernel, cols.data());
        const int hw = static_cast<int>(out.plane());
        kt.gemm_nn(range.count, hw, kdim, w + static_cast<std::size_t>(range.first) * kdim, kdim, cols.data(), hw,
                   pre.data(), hw);
        for (int o = 0; o < range.count; ++o)
          for (int i = 0; i < hw; ++i) pre[static_cast<std::size_t>(o) * hw + i] += bias[range.first + o];
        break;
      }
      case LayerKind::transposed_convolution: {
        const int kk = l.kernel * l.kernel;
        const int kfull = l.out_channels * kk;
        const int nk = range.count * kk;
        const int nin = static_cast<int>(in.plane());
        auto& cols = tape.cols_[li];
        cols.assign(static_cast<std::size_t>(nk) * nin, 0.0);
        kt.gemm_tn(nk, nin, l.in_channels, w + static_cast<std::size_t>(range.first) * kk, kfull, x, nin, cols.data(),
                   nin);
        tconv_scatter(cols.data(), range.count, in.height, in.width, l.kernel, l.stride, tconv_padding(l), out.height,
                      out.width, pre.data());
        for (int o = 0; o < range.count; ++o)
          for (std::size_t i = 0; i < out.plane(); ++i) pre[o * out.plane() + i] += bias[range.first + o];
        break;
      }
    }
    activate(l, pre, tape.post_[li + 1]);
  }
  return tape.post_.back();
}

VolumeGrid forward(const GeneratorNetwork& net, std::span<const double> latent) {
  ForwardTape tape;
  const auto out = forward(net, latent, tape, -1);
  const auto& s = net.spec();
  VolumeGrid v(s.slices, s.height, s.width, s.channels_per_slice);
  std::copy(out.begin(), out.end(), v.values.begin());
  return v;
}

void backward(const GeneratorNetwork& net, ForwardTape& tape, std::span<const double> upstream,
              std::span<double> d_theta, std::span<double> d_latent) {
  const auto& spec = net.spec();
  const int n_layers = net.layer_count();
  if (tape.post_.size() != static_cast<std::size_t>(n_layers + 1)) throw ShapeError("backward called without forward");
  if (upstream.size() != tape.post_.back().size())
    throw ShapeError("upstream gradient has " + std::to_string(upstream.size()) + " values, output has " +
                     std::to_string(tape.post_.back().size()));
  if (d_theta.size() != net.parameter_count()) throw ShapeError("d_theta size mismatch");
  if (static_cast<int>(d_latent.size()) != spec.latent_dim) throw ShapeError("d_latent size mismatch");
  const auto& kt = simd::kernels();
  const auto params = net.params();

  // g holds dL/d(post of current layer); swapped with the buffer for the layer input.
  auto& g = tape.grad_a_;
  auto& gin = tape.grad_b_;
  g.assign(upstream.begin(), upstream.end());

  for (int li = n_layers - 1; li >= 0; --li) {
    const auto& l = spec.layers[li];
    const auto in = net.input_shape(li);
    const auto out = net.output_shape(li);
    const bool last = li == n_layers - 1;
    const ChannelRange range = (last && tape.slice_ >= 0)
                                   ? ChannelRange{tape.slice_ * spec.channels_per_slice, spec.channels_per_slice}
                                   : ChannelRange{0, out.channels};
    activation_backward(l, tape.pre_[li], tape.post_[li + 1], g);
    const double* w = params.data() + net.weight_offset(li);
    double* dw = d_theta.data() + net.weight_offset(li);
    double* db = d_theta.data() + net.bias_offset(li);
    const double* x = tape.post_[li].data();
    gin.assign(in.size(), 0.0);

    switch (l.kind) {
      case LayerKind::dense: {
        const int nin = static_cast<int>(in.size());
        const int nr = static_cast<int>(g.size());
        const std::size_t r0 = static_cast<std::size_t>(range.first) * out.plane();
        kt.gemm_nn(nr, nin, 1, g.data(), 1, x, nin, dw + r0 * nin, nin);
        for (int r = 0; r < nr; ++r) db[r0 + r] += g[r];
        kt.gemm_tn(nin, 1, nr, w + r0 * nin, nin, g.data(), 1, gin.data(), 1);
        break;
      }
      case LayerKind::convolution:
      case LayerKind::upsample_convolution: {
        const int kdim = l.in_channels * l.kernel * l.kernel;
        const int hw = static_cast<int>(out.plane());
        const auto& cols = tape.cols_[li];
        kt.gemm_nt(range.count, kdim, hw, g.data(), hw, cols.data(), hw, dw + static_cast<std::size_t>(range.first) * kdim,
                   kdim);
        for (int o = 0; o < range.count; ++o) {
          double s = 0.0;
          for (int i = 0; i < hw; ++i) s += g[static_cast<std::size_t>(o) * hw + i];
          db[range.first + o] += s;
        }
        auto& dcols = tape.grad_cols_;
        dcols.assign(static_cast<std::size_t>(kdim) * hw, 0.0);
        kt.gemm_tn(kdim, hw, range.count, w + static_cast<std::size_t>(range.first) * kdim, kdim, g.data(), hw,
                   dcols.data(), hw);
        if (l.kind == LayerKind::convolution) {
          col2im(dcols.data(), in.channels, in.height, in.width, l.kernel, gin.data());
        } else {
          std::vector<double> dup(static_cast<std::size_t>(in.channels) * out.plane(), 0.0);
          col2im(dcols.data(), in.channels, out.height, out.width, l.kernel, dup.data());
          upsample_nearest_adjoint(dup.data(), in.channels, in.height, in.width, l.stride, gin.data());
        }
        break;
      }
      case LayerKind::transposed_convolution: {
        const int kk = l.kernel * l.kernel;
        const int kfull = l.out_channels * kk;
        const int nk = range.count * kk;
        const int nin = static_cast<int>(in.plane());
        for (int o = 0; o < range.count; ++o) {
          double s = 0.0;
          for (std::size_t i = 0; i < out.plane(); ++i) s += g[o * out.plane() + i];
          db[range.first + o] += s;
        }
        auto& gcols = tape.grad_cols_;
        gcols.resize(static_cast<std::size_t>(nk) * nin);
        tconv_gather(g.data(), range.count, in.height, in.width, l.kernel, l.stride, tconv_padding(l), out.height,
                     out.width, gcols.data());
        kt.gemm_nt(l.in_channels, nk, nin, x, nin, gcols.data(), nin, dw + static_cast<std::size_t>(range.first) * kk,
                   kfull);
        kt.gemm_nn(l.in_channels, nin, nk, w + static_cast<std::size_t>(range.first) * kk, kfull, gcols.data(), nin,
                   gin.data(), nin);
        break;
      }
    }
    std::swap(g, gin);
  }
  // g now holds the gradient of the broadcast input grid.
  const auto in0 = net.input_shape(0);
  for (int c = 0; c < in0.channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < in0.plane(); ++i) s += g[c * in0.plane() + i];
    d_latent[c] = s;
  }
}

GradientBundle backward(const GeneratorNetwork& net, std::span<const double> latent, std::span<const double> upstream) {
  ForwardTape tape;
  forward(net, latent, tape, -1);
  GradientBundle out{std::vector<double>(net.parameter_count(), 0.0), std::vector<double>(net.latent_dim(), 0.0)};
  backward(net, tape, upstream, out.d_theta, out.d_latent);
  return out;
}

PenaltyValue l1sq_penalty(std::span<const double> theta) {
  double l1 = 0.0;
  for (double t : theta) l1 += std::abs(t);
  PenaltyValue p{l1 * l1, std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i)
    p.gradient[i] = theta[i] > 0.0 ? 2.0 * l1 : (theta[i] < 0.0 ? -2.0 * l1 : 0.0);
  return p;
}

PenaltyValue l1_penalty(std::span<const double> theta) {
  PenaltyValue p{0.0, std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    p.value += std::abs(theta[i]);
    p.gradient[i] = theta[i] > 0.0 ? 1.0 : (theta[i] < 0.0 ? -1.0 : 0.0);
  }
  return p;
}

}  // namespace vstorm

namespace vstorm {

void write_generator(ByteWriter& out, const GeneratorNetwork& net) {
  const auto& s = net.spec();
  out.raw("GNET");
  out.u32(1);
  out.u64(net.seed());
  for (int v : {s.latent_dim, s.input_height, s.input_width, s.slices, s.channels_per_slice, s.height, s.width})
    out.i32(v);
  out.f64(s.init_scale);
  out.u32(static_cast<std::uint32_t>(s.layers.size()));
  for (const auto& l : s.layers) {
    out.u8(static_cast<std::uint8_t>(l.kind));
    out.u8(static_cast<std::uint8_t>(l.activation));
    for (int v : {l.in_channels, l.out_channels, l.kernel, l.stride, l.out_height, l.out_width}) out.i32(v);
    out.f64(l.slope);
  }
  out.f64_array(net.params());
}

GeneratorNetwork read_generator(ByteReader& in) {
  in.expect_magic("GNET");
  const auto version = in.u32();
  if (version != 1) in.fail("unsupported generator section version " + std::to_string(version));
  const auto seed = in.u64();
  GeneratorSpec s;
  for (int* v : {&s.latent_dim, &s.input_height, &s.input_width, &s.slices, &s.channels_per_slice, &s.height, &s.width})
    *v = in.i32();
  s.init_scale = in.f64();
  const auto n_layers = in.u32();
  if (n_layers > 4096) in.fail("implausible layer count " + std::to_string(n_layers));
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = in.u8();
    const auto act = in.u8();
    if (kind > 3) in.fail("unknown layer kind code " + std::to_string(kind));
    if (act > 2) in.fail("unknown activation code " + std::to_string(act));
    l.kind = static_cast<LayerKind>(kind);
    l.activation = static_cast<Activation>(act);
    for (int* v : {&l.in_channels, &l.out_channels, &l.kernel, &l.stride, &l.out_height, &l.out_width}) *v = in.i32();
    l.slope = in.f64();
    s.layers.push_back(l);
  }
  GeneratorNetwork net(s, seed);
  const auto theta = in.f64_array();
  if (theta.size() != net.parameter_count())
    in.fail("parameter array has " + std::to_string(theta.size()) + " values, layers need " +
            std::to_string(net.parameter_count()));
  std::copy(theta.begin(), theta.end(), net.params().begin());
  return net;
}

}  // namespace vstorm
