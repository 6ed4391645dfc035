#include "gptrans/networks.hpp"

#include <algorithm>
#include <cmath>

#include <ATen/CPUGeneratorImpl.h>

#include "gptrans/errors.hpp"

namespace gptrans {
namespace {

using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;

constexpr int kLabelEmbeddingDim = 64;

torch::nn::AnyModule lrelu() {
    return torch::nn::AnyModule(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
}

void check_labels(const torch::Tensor& labels, int num_domains, std::int64_t batch) {
    if (labels.dim() != 1 || labels.size(0) != batch) {
        throw InputError("domain labels must be a [B] integer tensor matching the batch");
    }
    if (labels.numel() == 0) return;
    const auto lo = labels.min().item<std::int64_t>();
    const auto hi = labels.max().item<std::int64_t>();
    if (lo < 0 || hi >= num_domains) {
        throw InputError("domain label out of range [0, " + std::to_string(num_domains) + ")");
    }
}

void check_code(const torch::Tensor& code) {
    if (code.dim() != 4 || code.size(1) != 1) {
        throw InputError("content code must be [B, 1, h, w], got " + c10::str(code.sizes()));
    }
}

template <class Holder>
void require(const Holder& m, const char* what) {
    if (!m) throw InputError(std::string(what) + " is not part of this network bundle");
}

} // namespace

void check_images(const torch::Tensor& images, int expected_size) {
    if (images.dim() != 4 || images.size(1) != 3) {
        throw InputError("images must be [B, 3, H, W], got " + c10::str(images.sizes()));
    }
    const auto h = images.size(2);
    const auto w = images.size(3);
    if (h < 64 || w < 64 || h % 64 != 0 || w % 64 != 0) {
        throw InputError("image sides must be multiples of 64 and at least 64, got " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    if (expected_size > 0 && (h != expected_size || w != expected_size)) {
        throw InputError("expected " + std::to_string(expected_size) + "x" + std::to_string(expected_size) +
                         " images, got " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (images.numel() > 0 && images.abs().max().item<double>() > 1.0 + 1e-6) {
        throw InputError("image values must lie in [-1, 1]");
    }
}

int scaled_width(const Config& config, int paper_width) {
    return std::max(1, paper_width / config.channel_divisor);
}

at::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

torch::Tensor inject_noise(const torch::Tensor& code, double std, at::Generator& gen) {
    if (std == 0.0) return code;
    auto noise = torch::empty_like(code).normal_(0.0, std, gen);
    return code + noise;
}

// ------------------------------------------------------------ encoders ----

ContentEncoderImpl::ContentEncoderImpl(const Config& config) : image_size(config.image_size) {
    const std::pair<int, int> spec[] = {{64, 1},  {64, 2},  {64, 1},  {128, 2}, {128, 1}, {256, 2},
                                        {256, 1}, {512, 2}, {512, 1}, {512, 2}, {512, 1}};
    layers = register_module("layers", torch::nn::ModuleList());
    int in = 3;
    for (auto [width, stride] : spec) {
        const int out = scaled_width(config, width);
        layers->push_back(ConvBlock(in, out, 3, stride, 1, Norm::Instance, Act::LeakyReLU));
        in = out;
    }
    to_code = register_module("to_code", Conv2d(Conv2dOptions(in, 1, 3).padding(1)));
}

ContentCode ContentEncoderImpl::forward(const torch::Tensor& images) {
    // Layer 6 (C256/1) runs at H/8 and layer 8 (C512/1) at H/16.
    constexpr std::size_t kTapH8 = 6;
    constexpr std::size_t kTapH16 = 8;
    ContentCode out;
    torch::Tensor tap8, tap16;
    auto h = images;
    for (std::size_t i = 0; i < layers->size(); ++i) {
        h = layers[i]->as<ConvBlockImpl>()->forward(h);
        if (i == kTapH8) tap8 = h;
        if (i == kTapH16) tap16 = h;
    }
    out.code = to_code->forward(h);
    out.taps = {tap16, tap8};
    return out;
}

DistillStyleEncoderImpl::DistillStyleEncoderImpl(const Config& config) {
    body = register_module("body", torch::nn::Sequential());
    int in = 3;
    for (int width : {64, 128, 256, 512, 512, 512}) {
        const int out = scaled_width(config, width);
        body->push_back(ConvBlock(in, out, 3, 2, 1, Norm::None, Act::LeakyReLU));
        in = out;
    }
    style_dim = in;
}

torch::Tensor DistillStyleEncoderImpl::forward(const torch::Tensor& images) {
    return body->forward(images).mean({2, 3});
}

StyleEncoderImpl::StyleEncoderImpl(const Config& config) {
    convs = register_module("convs", torch::nn::Sequential());
    const int c64 = scaled_width(config, 64);
    const int c128 = scaled_width(config, 128);
    const int c256 = scaled_width(config, 256);
    convs->push_back(ConvBlock(3, c64, 7, 1, 3, Norm::None, Act::ReLU));
    convs->push_back(ConvBlock(c64, c128, 4, 2, 1, Norm::None, Act::ReLU));
    int in = c128;
    for (int i = 0; i < 4; ++i) {
        convs->push_back(ConvBlock(in, c256, 4, 2, 1, Norm::None, Act::ReLU));
        in = c256;
    }
    fc1 = register_module("fc1", torch::nn::Linear(in, kStyleDim));
    fc2 = register_module("fc2", torch::nn::Linear(kStyleDim, 64));
    fc3 = register_module("fc3", torch::nn::Linear(64, kStyleDim));
}

torch::Tensor StyleEncoderImpl::forward(const torch::Tensor& images) {
    auto h = convs->forward(images).mean({2, 3});
    h = torch::relu(fc1->forward(h));
    h = torch::relu(fc2->forward(h));
    return fc3->forward(h);
}

// ------------------------------------------------------------- stage I -----

DecoderImpl::DecoderImpl(const Config& config, int style_dim) : num_domains(config.num_domains) {
    const int c512 = scaled_width(config, 512);
    input_conv = register_module("input_conv", Conv2d(Conv2dOptions(1, c512, 3).padding(1)));
    shared_convs = register_module("shared_convs", torch::nn::ModuleList());
    shared_mods = register_module("shared_mods", torch::nn::ModuleList());
    for (int i = 0; i < 4; ++i) {
        shared_convs->push_back(Conv2d(Conv2dOptions(c512, c512, 3).padding(1)));
        shared_mods->push_back(AffineConditioner(kLabelEmbeddingDim, c512));
    }
    label_embedding = register_module("label_embedding", torch::nn::Embedding(num_domains, kLabelEmbeddingDim));
    style_convs = register_module("style_convs", torch::nn::ModuleList());
    style_mods = register_module("style_mods", torch::nn::ModuleList());
    int in = c512;
    for (int width : {256, 128, 64}) {
        const int out = scaled_width(config, width);
        style_convs->push_back(Conv2d(Conv2dOptions(in, out, 3).padding(1)));
        style_mods->push_back(AffineConditioner(style_dim, out));
        in = out;
    }
    to_rgb = register_module("to_rgb", Conv2d(Conv2dOptions(in, 3, 3).padding(1)));
    to_shape = register_module("to_shape", Conv2d(Conv2dOptions(c512, 1, 3).padding(1)));
}

torch::Tensor DecoderImpl::shared_trunk(const torch::Tensor& code, const torch::Tensor& labels) {
    check_code(code);
    check_labels(labels, num_domains, code.size(0));
    auto h = torch::leaky_relu(instance_norm(input_conv->forward(code)), kLeakySlope);
    const auto emb = label_embedding->forward(labels);
    for (std::size_t i = 0; i < shared_convs->size(); ++i) {
        auto [scale, shift] = shared_mods[i]->as<AffineConditionerImpl>()->forward(emb);
        h = torch::relu(adain(shared_convs[i]->as<torch::nn::Conv2dImpl>()->forward(h), scale, shift));
        if (i == 2) h = upsample2x(h);
    }
    return h;
}

torch::Tensor DecoderImpl::decode_appearance(const torch::Tensor& code, const torch::Tensor& style,
                                             const torch::Tensor& labels) {
    auto h = upsample2x(shared_trunk(code, labels));
    for (std::size_t i = 0; i < style_convs->size(); ++i) {
        auto [scale, shift] = style_mods[i]->as<AffineConditionerImpl>()->forward(style);
        h = torch::relu(adain(style_convs[i]->as<torch::nn::Conv2dImpl>()->forward(h), scale, shift));
        h = upsample2x(h);
    }
    return torch::tanh(to_rgb->forward(h));
}

torch::Tensor DecoderImpl::decode_shape(const torch::Tensor& code, const torch::Tensor& labels) {
    return torch::sigmoid(to_shape->forward(shared_trunk(code, labels)));
}

DomainClassifierImpl::DomainClassifierImpl(const Config& config) {
    const int kernel = std::min(4, config.image_size / 64);
    const int hidden = config.num_domains + 1;
    body = register_module("body", torch::nn::Sequential());
    body->push_back(Conv2d(Conv2dOptions(1, scaled_width(config, 32), 3).stride(2).padding(1)));
    body->push_back(lrelu());
    body->push_back(Conv2d(Conv2dOptions(scaled_width(config, 32), scaled_width(config, 64), 3).padding(1)));
    body->push_back(lrelu());
    body->push_back(Conv2d(Conv2dOptions(scaled_width(config, 64), hidden, kernel)));
    body->push_back(lrelu());
    fc = register_module("fc", torch::nn::Linear(hidden, config.num_domains));
}

torch::Tensor DomainClassifierImpl::forward(const torch::Tensor& code) {
    check_code(code);
    return fc->forward(body->forward(code).mean({2, 3}));
}

// ------------------------------------------------------------ stage II -----

GeneratorImpl::GeneratorImpl(const Config& config) : sites(config.dsc_sites) {
    const int c512 = scaled_width(config, 512);
    const int c256 = scaled_width(config, 256);
    const int c128 = scaled_width(config, 128);
    const int c64 = scaled_width(config, 64);
    blocks = register_module("blocks", torch::nn::ModuleList());
    blocks->push_back(AdaResBlock(1, c512, kStyleDim, false));
    blocks->push_back(AdaResBlock(c512, c512, kStyleDim, true));
    blocks->push_back(AdaResBlock(c512, c512, kStyleDim, false));
    blocks->push_back(AdaResBlock(c512, c256, kStyleDim, false));
    blocks->push_back(AdaResBlock(c256, c128, kStyleDim, true));
    blocks->push_back(AdaResBlock(c128, c64, kStyleDim, true));
    blocks->push_back(AdaResBlock(c64, c64, kStyleDim, false));
    skip1 = register_module("skip1", DynamicSkip(1, c512));
    skip2 = register_module("skip2", DynamicSkip(c512, c256));
    to_rgb = register_module("to_rgb", Conv2d(Conv2dOptions(c64, 3, 7).padding(3)));
}

GenerateResult GeneratorImpl::forward(const ContentCode& content, const torch::Tensor& style, SkipMode mode) {
    check_code(content.code);
    if (style.dim() != 2 || style.size(1) != kStyleDim || style.size(0) != content.code.size(0)) {
        throw InputError("style must be [B, 256] matching the content batch");
    }
    const bool use1 = mode != SkipMode::Disabled && std::count(sites.begin(), sites.end(), 1) > 0;
    const bool use2 = mode != SkipMode::Disabled && std::count(sites.begin(), sites.end(), 2) > 0;
    if ((use1 || use2) && content.taps.size() != 2) {
        throw InputError("content code carries no encoder taps for the skip connections");
    }
    const bool zero = mode == SkipMode::ZeroMask;
    auto block = [&](std::size_t i, const torch::Tensor& x) {
        return blocks[i]->as<AdaResBlockImpl>()->forward(x, style);
    };

    GenerateResult out;
    auto h = block(0, content.code);
    h = block(1, h);
    h = block(2, h);
    torch::Tensor hidden = content.code;
    if (use1) {
        auto s = skip1->forward(hidden, content.taps[0], h, zero);
        h = s.fused;
        hidden = s.hidden;
        out.masks.push_back(s.mask);
    }
    h = block(3, upsample2x(h));
    if (use2) {
        auto s = skip2->forward(hidden, content.taps[1], h, zero);
        h = s.fused;
        out.masks.push_back(s.mask);
    }
    h = block(4, upsample2x(h));
    h = block(5, h);
    h = block(6, h);
    out.image = torch::tanh(to_rgb->forward(h));
    return out;
}

DiscriminatorImpl::DiscriminatorImpl(const Config& config) : tapped_block(config.style_feature_block) {
    const int n_blocks = static_cast<int>(std::lround(std::log2(config.image_size))) - 2;
    const int widths[] = {128, 256, 512, 512, 512, 512};
    stem = register_module("stem", ConvBlock(3, scaled_width(config, 64), 3, 1, 1, Norm::Instance, Act::LeakyReLU));
    blocks = register_module("blocks", torch::nn::ModuleList());
    int in = scaled_width(config, 64);
    for (int i = 0; i < n_blocks; ++i) {
        const int out = scaled_width(config, widths[std::min(i, 5)]);
        blocks->push_back(ResBlock(in, out, true));
        in = out;
    }
    if (tapped_block > n_blocks) {
        throw ConfigError("style_feature_block " + std::to_string(tapped_block) + " exceeds the " +
                          std::to_string(n_blocks) + " discriminator blocks");
    }
    head1 = register_module("head1", Conv2d(Conv2dOptions(in, scaled_width(config, 512), 4)));
    head2 = register_module("head2", Conv2d(Conv2dOptions(scaled_width(config, 512), 1, 1)));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images) {
    DiscriminatorOutput out;
    auto h = stem->forward(images);
    for (std::size_t i = 0; i < blocks->size(); ++i) {
        h = blocks[i]->as<ResBlockImpl>()->forward(h);
        if (static_cast<int>(i) + 1 == tapped_block) out.style_feature = h.mean({2, 3});
    }
    h = torch::leaky_relu(head1->forward(h), kLeakySlope);
    out.logits = head2->forward(h).mean({1, 2, 3});
    return out;
}

StyleMapperImpl::StyleMapperImpl(const Config& config) : noise_dim(config.mapper_noise_dim) {
    body = register_module("body", torch::nn::Sequential(torch::nn::Linear(noise_dim, config.mapper_hidden),
                                                         torch::nn::ReLU(),
                                                         torch::nn::Linear(config.mapper_hidden, config.mapper_hidden),
                                                         torch::nn::ReLU(),
                                                         torch::nn::Linear(config.mapper_hidden, kStyleDim)));
}

torch::Tensor StyleMapperImpl::forward(const torch::Tensor& noise) {
    if (noise.dim() != 2 || noise.size(1) != noise_dim) {
        throw InputError("style noise must be [B, " + std::to_string(noise_dim) + "]");
    }
    return body->forward(noise);
}

// -------------------------------------------------------------- bundle -----

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> NetworkBundle::modules() const {
    std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> out;
    auto add = [&](const char* name, const auto& holder) {
        if (holder) out.emplace_back(name, holder.ptr());
    };
    add("classifier", classifier);
    add("decoder", decoder);
    add("discriminator", discriminator);
    add("distill_es", distill_es);
    add("ec", ec);
    add("es", es);
    add("generator", generator);
    add("mapper", mapper);
    return out;
}

std::vector<std::pair<std::string, torch::Tensor>> NetworkBundle::named_parameters() const {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& [prefix, module] : modules()) {
        for (const auto& item : module->named_parameters(/*recurse=*/true)) {
            out.emplace_back(prefix + "." + item.key(), item.value());
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

void NetworkBundle::train(bool on) {
    for (auto& [name, module] : modules()) module->train(on);
}

void NetworkBundle::to(torch::Dtype dtype) {
    for (auto& [name, module] : modules()) module->to(dtype);
}

ContentCode NetworkBundle::content_encode(const torch::Tensor& images) const {
    require(ec, "content encoder");
    check_images(images);
    return ec.ptr()->forward(images);
}

torch::Tensor NetworkBundle::style_encode(const torch::Tensor& images) const {
    check_images(images);
    if (es) return es.ptr()->forward(images);
    require(distill_es, "style encoder");
    return distill_es.ptr()->forward(images);
}

torch::Tensor NetworkBundle::decode_appearance(const ContentCode& code, const torch::Tensor& style,
                                               const torch::Tensor& labels) const {
    require(decoder, "decoder");
    return decoder.ptr()->decode_appearance(code.code, style, labels);
}

torch::Tensor NetworkBundle::decode_shape(const ContentCode& code, const torch::Tensor& labels) const {
    require(decoder, "decoder");
    return decoder.ptr()->decode_shape(code.code, labels);
}

torch::Tensor NetworkBundle::classify_domain(const torch::Tensor& code) const {
    require(classifier, "domain classifier");
    return classifier.ptr()->forward(code);
}

GenerateResult NetworkBundle::generate(const ContentCode& code, const torch::Tensor& style, SkipMode mode) const {
    require(generator, "generator");
    return generator.ptr()->forward(code, style, mode);
}

DiscriminatorOutput NetworkBundle::discriminate(const torch::Tensor& images) const {
    require(discriminator, "discriminator");
    check_images(images);
    return discriminator.ptr()->forward(images);
}

torch::Tensor NetworkBundle::sample_style(const torch::Tensor& noise) const {
    if (!mapper || !mapper_trained) {
        throw UnavailableError("style sampling is unavailable: the style mapper has not been fitted");
    }
    return mapper.ptr()->forward(noise);
}

NetworkBundle build_networks(const Config& config, std::uint64_t seed) {
    config.validate();
    NetworkBundle b;
    b.config = config;
    auto gen = make_generator(seed);
    b.ec = ContentEncoder(config);
    init_weights(*b.ec, gen);
    if (config.stage == 1) {
        b.distill_es = DistillStyleEncoder(config);
        init_weights(*b.distill_es, gen);
        b.decoder = Decoder(config, b.distill_es->style_dim);
        init_weights(*b.decoder, gen);
        b.classifier = DomainClassifier(config);
        init_weights(*b.classifier, gen);
    } else {
        b.es = StyleEncoder(config);
        init_weights(*b.es, gen);
        b.generator = Generator(config);
        init_weights(*b.generator, gen);
        b.discriminator = Discriminator(config);
        init_weights(*b.discriminator, gen);
        b.mapper = StyleMapper(config);
        init_weights(*b.mapper, gen);
    }
    return b;
}

} // namespace gptrans
