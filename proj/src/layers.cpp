#include "gptrans/layers.hpp"

#include <cmath>

#include "gptrans/errors.hpp"

namespace gptrans {
namespace {

class GradReverseFn : public torch::autograd::Function<GradReverseFn> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext*, const torch::Tensor& x) {
        return x.clone();
    }
    static torch::autograd::tensor_list backward(torch::autograd::AutogradContext*,
                                                 torch::autograd::tensor_list grads) {
        return {-grads[0]};
    }
};

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

} // namespace

torch::Tensor adain(const torch::Tensor& feature, const torch::Tensor& scale, const torch::Tensor& shift) {
    if (feature.dim() != 4) throw InputError("adain expects a [B, C, H, W] feature");
    const auto channels = feature.size(1);
    auto expand = [&](const torch::Tensor& p, const char* name) {
        if (p.size(-1) != channels) {
            throw InputError(std::string("adain: ") + name + " has " + std::to_string(p.size(-1)) +
                             " channels, feature has " + std::to_string(channels));
        }
        return p.dim() == 1 ? p.view({1, channels, 1, 1}) : p.view({p.size(0), channels, 1, 1});
    };
    return instance_norm(feature) * expand(scale, "scale") + expand(shift, "shift");
}

torch::Tensor instance_norm(const torch::Tensor& feature) {
    const auto mean = feature.mean({2, 3}, /*keepdim=*/true);
    const auto centered = feature - mean;
    const auto var = centered.square().mean({2, 3}, /*keepdim=*/true);
    return centered * torch::rsqrt(var + kNormEps);
}

torch::Tensor upsample2x(const torch::Tensor& x) {
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

torch::Tensor grad_reverse(const torch::Tensor& x) { return GradReverseFn::apply(x); }

torch::Tensor activate(const torch::Tensor& x, Act act) {
    switch (act) {
    case Act::None: return x;
    case Act::LeakyReLU: return torch::leaky_relu(x, kLeakySlope);
    case Act::ReLU: return torch::relu(x);
    case Act::Tanh: return torch::tanh(x);
    case Act::Sigmoid: return torch::sigmoid(x);
    }
    return x;
}

ConvBlockImpl::ConvBlockImpl(int in, int out, int kernel, int stride, int padding, Norm norm_, Act act_)
    : norm(norm_), act(act_) {
    conv = register_module(
        "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
    auto h = conv->forward(x);
    if (norm == Norm::Instance) h = instance_norm(h);
    return activate(h, act);
}

AffineConditionerImpl::AffineConditionerImpl(int cond_dim, int channels_) : channels(channels_) {
    fc = register_module("fc", torch::nn::Linear(cond_dim, 2 * channels));
}

std::pair<torch::Tensor, torch::Tensor> AffineConditionerImpl::forward(const torch::Tensor& cond) {
    auto p = fc->forward(cond);
    auto parts = p.split(channels, /*dim=*/1);
    return {parts[0], parts[1]};
}

AdaResBlockImpl::AdaResBlockImpl(int in, int out, int style_dim, bool upsample_) : upsample(upsample_) {
    using torch::nn::Conv2dOptions;
    conv1 = register_module("conv1", torch::nn::Conv2d(Conv2dOptions(in, out, 3).padding(1)));
    conv2 = register_module("conv2", torch::nn::Conv2d(Conv2dOptions(out, out, 3).padding(1)));
    mod1 = register_module("mod1", AffineConditioner(style_dim, out));
    mod2 = register_module("mod2", AffineConditioner(style_dim, out));
    if (in != out) {
        shortcut = register_module("shortcut", torch::nn::Conv2d(Conv2dOptions(in, out, 1).bias(false)));
    }
}

torch::Tensor AdaResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& style) {
    const auto input = upsample ? upsample2x(x) : x;
    auto [s1, b1] = mod1->forward(style);
    auto [s2, b2] = mod2->forward(style);
    auto h = torch::leaky_relu(adain(conv1->forward(input), s1, b1), kLeakySlope);
    h = adain(conv2->forward(h), s2, b2);
    const auto skip = shortcut ? shortcut->forward(input) : input;
    return (h + skip) * kInvSqrt2;
}

ResBlockImpl::ResBlockImpl(int in, int out, bool downsample_) : downsample(downsample_) {
    using torch::nn::Conv2dOptions;
    conv1 = register_module("conv1", torch::nn::Conv2d(Conv2dOptions(in, in, 3).padding(1)));
    conv2 = register_module("conv2", torch::nn::Conv2d(Conv2dOptions(in, out, 3).padding(1)));
    if (in != out) {
        shortcut = register_module("shortcut", torch::nn::Conv2d(Conv2dOptions(in, out, 1).bias(false)));
    }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(instance_norm(conv1->forward(x)), kLeakySlope);
    if (downsample) h = torch::avg_pool2d(h, 2);
    h = torch::leaky_relu(instance_norm(conv2->forward(h)), kLeakySlope);
    auto skip = shortcut ? shortcut->forward(x) : x;
    if (downsample) skip = torch::avg_pool2d(skip, 2);
    return (h + skip) * kInvSqrt2;
}

void init_weights(torch::nn::Module& module, at::Generator& gen) {
    torch::NoGradGuard no_grad;
    for (auto& m : module.modules(/*include_self=*/true)) {
        if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
            conv->weight.normal_(0.0, 0.02, gen);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* fc = m->as<torch::nn::LinearImpl>()) {
            fc->weight.normal_(0.0, 0.02, gen);
            if (fc->bias.defined()) fc->bias.zero_();
        } else if (auto* emb = m->as<torch::nn::EmbeddingImpl>()) {
            emb->weight.normal_(0.0, 1.0, gen);
        }
    }
    for (auto& m : module.modules(/*include_self=*/true)) {
        if (auto* cond = m->as<AffineConditionerImpl>()) {
            cond->fc->weight.zero_();
            cond->fc->bias.narrow(0, 0, cond->channels).fill_(1.0);
            cond->fc->bias.narrow(0, cond->channels, cond->channels).zero_();
        }
    }
}

} // namespace gptrans
