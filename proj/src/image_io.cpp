#include "gptrans/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "gptrans/errors.hpp"

namespace gptrans {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw IoError(std::string("png: ") + message); }
void png_warn(png_structp, png_const_charp) {}

} // namespace

Raster read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    Raster out;
    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const auto color = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        out.channels = png_get_channels(png, info);
        if (out.channels != 1 && out.channels != 3) throw IoError(path.string() + ": unsupported channel layout");
        const auto stride = png_get_rowbytes(png, info);
        out.pixels.resize(stride * out.height);
        std::vector<png_bytep> rows(out.height);
        for (int r = 0; r < out.height; ++r) rows[r] = out.pixels.data() + r * stride;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (const IoError& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": " + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
    if (raster.channels != 1 && raster.channels != 3) throw IoError("write_png: raster must have 1 or 3 channels");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, raster.width, raster.height, 8,
                     raster.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t stride = static_cast<std::size_t>(raster.width) * raster.channels;
        for (int r = 0; r < raster.height; ++r) {
            png_write_row(png, const_cast<png_bytep>(raster.pixels.data() + r * stride));
        }
        png_write_end(png, nullptr);
    } catch (const IoError& e) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string() + ": " + e.what());
    }
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("write failed for " + path.string());
}

Raster to_raster(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3) throw InputError("to_raster expects a [3, H, W] image");
    const auto q = ((image.detach().to(torch::kFloat64) + 1.0) * 127.5).round().clamp(0, 255).to(torch::kUInt8);
    const auto hwc = q.permute({1, 2, 0}).contiguous();
    Raster r;
    r.height = static_cast<int>(image.size(1));
    r.width = static_cast<int>(image.size(2));
    r.channels = 3;
    r.pixels.assign(hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel());
    return r;
}

torch::Tensor from_raster(const Raster& raster) {
    auto bytes = torch::from_blob(const_cast<std::uint8_t*>(raster.pixels.data()),
                                  {raster.height, raster.width, raster.channels}, torch::kUInt8);
    auto img = bytes.permute({2, 0, 1}).to(torch::kFloat32) / 127.5 - 1.0;
    if (raster.channels == 1) img = img.expand({3, raster.height, raster.width});
    return img.contiguous();
}

Raster mask_to_raster(const torch::Tensor& mask) {
    if (mask.dim() != 3 || mask.size(0) != 1) throw InputError("mask_to_raster expects a [1, H, W] mask");
    const auto q = (mask.detach().to(torch::kFloat64) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
    Raster r;
    r.height = static_cast<int>(mask.size(1));
    r.width = static_cast<int>(mask.size(2));
    r.channels = 1;
    r.pixels.assign(q.data_ptr<std::uint8_t>(), q.data_ptr<std::uint8_t>() + q.numel());
    return r;
}

torch::Tensor binary_mask_from_raster(const Raster& raster) {
    auto bytes = torch::from_blob(const_cast<std::uint8_t*>(raster.pixels.data()),
                                  {raster.height, raster.width, raster.channels}, torch::kUInt8);
    auto gray = bytes.select(2, 0);
    return (gray >= 128).to(torch::kFloat32).unsqueeze(0).contiguous();
}

torch::Tensor area_downsample(const torch::Tensor& x, int factor) {
    if (factor == 1) return x;
    if (x.dim() == 3) return torch::avg_pool2d(x.unsqueeze(0), factor).squeeze(0);
    return torch::avg_pool2d(x, factor);
}

Raster horizontal_strip(const std::vector<Raster>& tiles) {
    if (tiles.empty()) throw InputError("horizontal_strip needs at least one tile");
    const auto& first = tiles.front();
    Raster out;
    out.height = first.height;
    out.channels = first.channels;
    out.width = first.width * static_cast<int>(tiles.size());
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
    const std::size_t tile_row = static_cast<std::size_t>(first.width) * first.channels;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto& tile = tiles[t];
        if (tile.width != first.width || tile.height != first.height || tile.channels != first.channels) {
            throw InputError("horizontal_strip tiles must share one size");
        }
        for (int r = 0; r < out.height; ++r) {
            std::copy_n(tile.pixels.data() + r * tile_row, tile_row,
                        out.pixels.data() + r * tile_row * tiles.size() + t * tile_row);
        }
    }
    return out;
}

} // namespace gptrans
