#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace gptrans {

// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

// PNG encode/decode through libpng; IoError on failure. Palette, 16-bit and
// alpha inputs are converted to 8-bit gray/RGB on read.
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& raster);

// [3, H, W] tensor in [-1, 1] <-> RGB raster. Quantisation is
// round((v + 1) * 127.5) with clamping.
Raster to_raster(const torch::Tensor& image);
torch::Tensor from_raster(const Raster& raster);

// [1, H, W] tensor in [0, 1] -> gray raster, round(v * 255).
Raster mask_to_raster(const torch::Tensor& mask);

// Gray raster -> binary [1, H, W] mask (pixel >= 128 is foreground).
torch::Tensor binary_mask_from_raster(const Raster& raster);

// Area (box) downsampling of [.., H, W] by an integer factor.
torch::Tensor area_downsample(const torch::Tensor& x, int factor);

// Places equally sized rasters side by side.
Raster horizontal_strip(const std::vector<Raster>& tiles);

} // namespace gptrans
