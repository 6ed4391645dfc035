#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gptrans/checkpoint.hpp"
#include "gptrans/networks.hpp"

namespace gptrans {

struct PrepareOptions {
    bool strict = false;  // reject instead of crop+resize
    std::function<void(const std::string&)> notice;  // receives the resize report
};

// Reads a PNG as a [1, 3, H, W] batch. Sides that are not multiples of 64 are
// center-cropped to a square and resized to `target_size` (or rejected with
// InputError when strict).
torch::Tensor load_image(const std::filesystem::path& path, int target_size, const PrepareOptions& options = {});

// Crop+resize of an in-memory [1, 3, H, W] batch, same rule as load_image.
torch::Tensor conform_image(const torch::Tensor& image, int target_size, const PrepareOptions& options = {});

// Exemplar-guided and latent-sampled translation with a stage II checkpoint.
class Translator {
public:
    explicit Translator(const Checkpoint& stage2);

    torch::Tensor style_of(const torch::Tensor& style_image) const;
    // Style drawn by the mapper from seeded unit Gaussian noise.
    // UnavailableError if the mapper was never fitted.
    torch::Tensor sample_style(std::uint64_t seed) const;
    static torch::Tensor blend(const torch::Tensor& a, const torch::Tensor& b, double t);

    GenerateResult translate(const torch::Tensor& content, const torch::Tensor& style, bool zero_mask = false) const;

    const NetworkBundle& bundle() const { return bundle_; }
    int image_size() const { return bundle_.config.image_size; }

private:
    NetworkBundle bundle_;
};

// Evenly spaced t on [0, 1]; steps >= 2.
std::vector<double> blend_steps(int steps);

// `<content>__<style>__<tag>.png`
std::string output_name(const std::string& content_stem, const std::string& style_stem, const std::string& tag);

// Formats t for file names: fixed three decimals.
std::string format_t(double t);

// Gray [1, h, w] image of a skip mask: channel mean, min-max normalised.
torch::Tensor mask_visual(const torch::Tensor& mask);

} // namespace gptrans
