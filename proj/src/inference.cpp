#include "gptrans/inference.hpp"

#include <cstdio>

#include "gptrans/errors.hpp"
#include "gptrans/image_io.hpp"
#include "gptrans/rng.hpp"

namespace gptrans {
namespace F = torch::nn::functional;

torch::Tensor conform_image(const torch::Tensor& image, int target_size, const PrepareOptions& options) {
    if (image.dim() != 4 || image.size(0) != 1 || image.size(1) != 3) {
        throw InputError("expected a single [1, 3, H, W] image");
    }
    const auto h = image.size(2);
    const auto w = image.size(3);
    if (h >= 64 && w >= 64 && h % 64 == 0 && w % 64 == 0) return image;
    const std::string size = std::to_string(w) + "x" + std::to_string(h);
    if (options.strict) throw InputError("image is " + size + "; sides must be multiples of 64");
    const auto side = std::min(h, w);
    auto crop = image.narrow(2, (h - side) / 2, side).narrow(3, (w - side) / 2, side);
    auto out = F::interpolate(crop, F::InterpolateFuncOptions()
                                        .size(std::vector<std::int64_t>{target_size, target_size})
                                        .mode(torch::kBilinear)
                                        .align_corners(false)
                                        .antialias(side > target_size));
    if (options.notice) {
        options.notice("resized " + size + " -> " + std::to_string(target_size) + "x" + std::to_string(target_size) +
                       " (center crop " + std::to_string(side) + ")");
    }
    return out.clamp(-1.0, 1.0);
}

torch::Tensor load_image(const std::filesystem::path& path, int target_size, const PrepareOptions& options) {
    const auto raster = read_png(path);
    auto image = from_raster(raster);
    if (image.size(0) == 1) image = image.expand({3, -1, -1}).contiguous();
    PrepareOptions named = options;
    if (options.notice) named.notice = [&](const std::string& m) { options.notice(path.string() + ": " + m); };
    return conform_image(image.unsqueeze(0), target_size, named);
}

Translator::Translator(const Checkpoint& stage2) : bundle_(restore_bundle(stage2, 2)) { bundle_.train(false); }

torch::Tensor Translator::style_of(const torch::Tensor& style_image) const {
    torch::NoGradGuard no_grad;
    return bundle_.style_encode(style_image);
}

torch::Tensor Translator::sample_style(std::uint64_t seed) const {
    SplitMix64 rng(derive_seed(seed, 0x5eed));
    std::vector<float> noise(static_cast<std::size_t>(bundle_.config.mapper_noise_dim));
    for (auto& v : noise) v = static_cast<float>(rng.gaussian());
    torch::NoGradGuard no_grad;
    return bundle_.sample_style(torch::tensor(noise).unsqueeze(0));
}

torch::Tensor Translator::blend(const torch::Tensor& a, const torch::Tensor& b, double t) {
    if (t == 0.0) return a.clone();
    if (t == 1.0) return b.clone();
    return a * (1.0 - t) + b * t;
}

GenerateResult Translator::translate(const torch::Tensor& content, const torch::Tensor& style, bool zero_mask) const {
    torch::NoGradGuard no_grad;
    const auto code = bundle_.content_encode(content);
    return bundle_.generate(code, style, zero_mask ? SkipMode::ZeroMask : SkipMode::Fused);
}

std::vector<double> blend_steps(int steps) {
    if (steps < 2) throw InputError("blend needs at least 2 steps");
    std::vector<double> t(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i) / (steps - 1);
    return t;
}

std::string output_name(const std::string& content_stem, const std::string& style_stem, const std::string& tag) {
    return content_stem + "__" + style_stem + "__" + tag + ".png";
}

std::string format_t(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%.3f", t);
    return buf;
}

torch::Tensor mask_visual(const torch::Tensor& mask) {
    auto m = mask.detach().to(torch::kFloat32);
    if (m.dim() == 4) m = m[0];
    if (m.dim() != 3) throw InputError("mask_visual expects [C, h, w] or [1, C, h, w]");
    auto mean = m.mean(0, true);
    const auto lo = mean.min();
    const auto range = mean.max() - lo;
    if (range.item<double>() <= 0.0) return torch::zeros_like(mean);
    return (mean - lo) / range;
}

} // namespace gptrans
