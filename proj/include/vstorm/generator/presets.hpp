#pragma once

#include "vstorm/generator/network.hpp"

namespace vstorm {

/// Digit decoder: dense to 8x7x7, then two stride-2 transposed convolutions to 28x28x1.
GeneratorSpec mnist_preset(int latent_dim = 2, int hidden_channels = 8);

/// Cine decoder with 10 weighted layers: dense to a (height/16 x width/16) grid,
/// four conv + transposed-conv pairs doubling resolution, and a final 3x3 conv
/// to 2 * slices channels (real/imag per slice). With width = 0 the channel
/// width is chosen so the parameter count is closest to params_per_output
/// times the output size.
GeneratorSpec mri_preset(int latent_dim, int height, int width, int slices, int channel_width = 0,
                         double params_per_output = 6.0);

/// Parameter count a spec would have, without allocating the network.
std::size_t parameter_count_of(const GeneratorSpec& spec);

}  // namespace vstorm
