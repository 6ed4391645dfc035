#pragma once

#include <torch/torch.h>

namespace gptrans {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.2;

// Adaptive instance normalisation. `feature` is [B, C, H, W]; `scale` and
// `shift` are [B, C] (or [C], broadcast over the batch). Per sample and
// channel the output has mean `shift` and standard deviation `scale`, up to
// the eps guard in the denominator. Throws InputError on a channel mismatch.
torch::Tensor adain(const torch::Tensor& feature, const torch::Tensor& scale, const torch::Tensor& shift);

// Parameter-free instance normalisation (biased variance, eps = 1e-5).
torch::Tensor instance_norm(const torch::Tensor& feature);

torch::Tensor upsample2x(const torch::Tensor& x);

// Identity on the forward pass, negated gradient on the backward pass.
torch::Tensor grad_reverse(const torch::Tensor& x);

enum class Norm { None, Instance };
enum class Act { None, LeakyReLU, ReLU, Tanh, Sigmoid };

torch::Tensor activate(const torch::Tensor& x, Act act);

// Convolution followed by optional instance norm and activation ("C" blocks).
struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(int in, int out, int kernel, int stride, int padding, Norm norm, Act act);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    Norm norm;
    Act act;
};
TORCH_MODULE(ConvBlock);

// Learned affine map from a conditioning vector to per-channel (scale, shift).
// Starts as the identity modulation: zero weights, bias scale=1 / shift=0.
struct AffineConditionerImpl : torch::nn::Module {
    AffineConditionerImpl(int cond_dim, int channels);
    // Returns {scale, shift}, each [B, channels].
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& cond);

    torch::nn::Linear fc{nullptr};
    int channels;
};
TORCH_MODULE(AffineConditioner);

// Residual block with every convolution followed by AdaIN; optional 2x
// nearest upsampling at the input.
struct AdaResBlockImpl : torch::nn::Module {
    AdaResBlockImpl(int in, int out, int style_dim, bool upsample);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
    AffineConditioner mod1{nullptr}, mod2{nullptr};
    bool upsample;
};
TORCH_MODULE(AdaResBlock);

// Discriminator residual block: conv-IN-LReLU twice with 2x2 average pooling
// in between; 1x1 projected shortcut when the width changes.
struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(int in, int out, bool downsample);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
    bool downsample;
};
TORCH_MODULE(ResBlock);

// Fills every conv / linear weight of `module` from N(0, 0.02) and zeroes
// biases, drawing from `gen`. Conditioners keep their identity init.
void init_weights(torch::nn::Module& module, at::Generator& gen);

} // namespace gptrans
