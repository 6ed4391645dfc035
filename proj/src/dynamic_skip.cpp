#include "gptrans/dynamic_skip.hpp"

#include "gptrans/errors.hpp"
#include "gptrans/layers.hpp"

namespace gptrans {

DynamicSkipImpl::DynamicSkipImpl(int hidden_channels_, int feature_channels_)
    : hidden_channels(hidden_channels_), feature_channels(feature_channels_) {
    using torch::nn::Conv2d;
    using torch::nn::Conv2dOptions;
    const int c = feature_channels;
    w_h = register_module("w_h", Conv2d(Conv2dOptions(hidden_channels, c, 3).padding(1)));
    w_r = register_module("w_r", Conv2d(Conv2dOptions(2 * c, c, 3).padding(1)));
    w_m = register_module("w_m", Conv2d(Conv2dOptions(2 * c, c, 3).padding(1)));
    w_e = register_module("w_e", Conv2d(Conv2dOptions(2 * c, c, 3).padding(1)));
}

SkipOutput DynamicSkipImpl::forward(const torch::Tensor& h_prev, const torch::Tensor& f_enc,
                                    const torch::Tensor& f_gen, bool zero_mask) {
    if (!f_enc.sizes().equals(f_gen.sizes())) {
        throw InputError("dynamic skip: encoder feature " + c10::str(f_enc.sizes()) +
                         " does not match generator feature " + c10::str(f_gen.sizes()));
    }
    if (f_enc.dim() != 4 || f_enc.size(1) != feature_channels) {
        throw InputError("dynamic skip: expected " + std::to_string(feature_channels) + "-channel features");
    }
    if (h_prev.dim() != 4 || h_prev.size(1) != hidden_channels || h_prev.size(2) * 2 != f_enc.size(2) ||
        h_prev.size(3) * 2 != f_enc.size(3)) {
        throw InputError("dynamic skip: hidden state " + c10::str(h_prev.sizes()) +
                         " must have half the resolution of " + c10::str(f_enc.sizes()));
    }

    const auto h_hat = torch::leaky_relu(w_h->forward(upsample2x(h_prev)), kLeakySlope);
    const auto gate_in = torch::cat({h_hat, f_enc}, 1);
    const auto reset = torch::sigmoid(w_r->forward(gate_in));
    // float32 sigmoid rounds to exactly 0 or 1 for large logits
    const double eps = gate_in.scalar_type() == torch::kDouble ? 1e-15 : 6e-8;
    auto mask = torch::sigmoid(w_m->forward(gate_in)).clamp(eps, 1.0 - eps);
    const auto hidden = reset * h_hat;
    const auto f_hat = torch::leaky_relu(w_e->forward(torch::cat({hidden, f_enc}, 1)), kLeakySlope);
    if (zero_mask) mask = torch::zeros_like(mask);
    const auto fused = (1.0 - mask) * f_gen + mask * f_hat;
    return {fused, hidden, mask};
}

torch::Tensor mask_sparsity(const std::vector<torch::Tensor>& masks) {
    if (masks.empty()) throw InputError("mask_sparsity needs at least one mask");
    auto total = masks.front().abs().mean();
    for (std::size_t i = 1; i < masks.size(); ++i) total = total + masks[i].abs().mean();
    return total;
}

} // namespace gptrans
