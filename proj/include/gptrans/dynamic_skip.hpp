#pragma once

#include <vector>

#include <torch/torch.h>

namespace gptrans {

// Mask handling for one generator pass.
//   Fused    - regular gated fusion.
//   ZeroMask - the unit runs but every mask is replaced by zeros, so the
//              fused feature is exactly the generator feature.
//   Disabled - the unit is skipped altogether.
enum class SkipMode { Fused, ZeroMask, Disabled };

struct SkipOutput {
    torch::Tensor fused;   // (1 - m) * f_G + m * f_E_hat
    torch::Tensor hidden;  // h^l, carried to the next site
    torch::Tensor mask;    // m^l in (0, 1), same shape as f_G
};

// GRU-like gated transfer of an encoder feature into the generator.
//
//   h_hat = lrelu(W_h * up(h_prev))
//   r     = sigmoid(W_r * [h_hat, f_E])
//   m     = sigmoid(W_m * [h_hat, f_E])
//   h     = r . h_hat
//   f_hat = lrelu(W_E * [h, f_E])
//   f     = (1 - m) . f_G + m . f_hat
//
// All convolutions are 3x3, stride 1, shape preserving; up() is 2x nearest.
// h_prev has `hidden_channels` channels at half the resolution of f_E.
struct DynamicSkipImpl : torch::nn::Module {
    DynamicSkipImpl(int hidden_channels, int feature_channels);

    SkipOutput forward(const torch::Tensor& h_prev, const torch::Tensor& f_enc, const torch::Tensor& f_gen,
                       bool zero_mask = false);

    torch::nn::Conv2d w_h{nullptr}, w_r{nullptr}, w_m{nullptr}, w_e{nullptr};
    int hidden_channels;
    int feature_channels;
};
TORCH_MODULE(DynamicSkip);

// Sum over sites of the mean absolute mask value. Throws InputError on an
// empty list.
torch::Tensor mask_sparsity(const std::vector<torch::Tensor>& masks);

} // namespace gptrans
