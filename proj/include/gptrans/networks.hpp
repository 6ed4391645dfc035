#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "gptrans/config.hpp"
#include "gptrans/dynamic_skip.hpp"
#include "gptrans/layers.hpp"

namespace gptrans {

// Single-channel coarse content map [B, 1, H/32, W/32] plus the encoder
// activations tapped for the skip connections: taps[0] at H/16 (512 ch),
// taps[1] at H/8 (256 ch), widths divided by the channel divisor.
struct ContentCode {
    torch::Tensor code;
    std::vector<torch::Tensor> taps;
};

// Checks a [B, 3, H, W] batch against the image contract (square multiple of
// 64 at least 64 px, values in [-1, 1]); InputError otherwise. When
// `expected_size` > 0 the side must match it.
void check_images(const torch::Tensor& images, int expected_size = 0);

// Channel width after applying the configured divisor.
int scaled_width(const Config& config, int paper_width);

// ---------------------------------------------------------------- encoders --

// C64/1-C64/2-C64/1-C128/2-C128/1-C256/2-C256/1-C512/2-C512/1-C512/2-C512/1
// (conv-IN-LReLU) followed by a plain 3x3 convolution to one channel.
struct ContentEncoderImpl : torch::nn::Module {
    explicit ContentEncoderImpl(const Config& config);
    ContentCode forward(const torch::Tensor& images);

    torch::nn::ModuleList layers{nullptr};
    torch::nn::Conv2d to_code{nullptr};
    int image_size;
};
TORCH_MODULE(ContentEncoder);

// Stage I style encoder: six stride-2 conv-LReLU layers, global average pool.
struct DistillStyleEncoderImpl : torch::nn::Module {
    explicit DistillStyleEncoderImpl(const Config& config);
    torch::Tensor forward(const torch::Tensor& images);

    torch::nn::Sequential body{nullptr};
    int style_dim;
};
TORCH_MODULE(DistillStyleEncoder);

// Stage II style encoder: C64(7)-C128(4)/2-4xC256(4)/2, GAP, FC256-FC64-FC256.
// Output is a 256-vector; the last FC has no activation.
struct StyleEncoderImpl : torch::nn::Module {
    explicit StyleEncoderImpl(const Config& config);
    torch::Tensor forward(const torch::Tensor& images);

    torch::nn::Sequential convs{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};
};
TORCH_MODULE(StyleEncoder);

// ----------------------------------------------------------------- stage I --

// Appearance decoder F with its shape head Fs. The input layer is
// conv-IN-LReLU; the next four layers are shared with Fs and modulated by the
// domain label; the three upsampling layers after them are modulated by the
// style vector; the output is conv-tanh. Fs taps the fifth layer at H/16 and
// predicts a one-channel sigmoid foreground map.
struct DecoderImpl : torch::nn::Module {
    DecoderImpl(const Config& config, int style_dim);

    torch::Tensor decode_appearance(const torch::Tensor& code, const torch::Tensor& style,
                                    const torch::Tensor& labels);
    torch::Tensor decode_shape(const torch::Tensor& code, const torch::Tensor& labels);

    torch::nn::Conv2d input_conv{nullptr};
    torch::nn::ModuleList shared_convs{nullptr};
    torch::nn::ModuleList shared_mods{nullptr};
    torch::nn::Embedding label_embedding{nullptr};
    torch::nn::ModuleList style_convs{nullptr};
    torch::nn::ModuleList style_mods{nullptr};
    torch::nn::Conv2d to_rgb{nullptr};
    torch::nn::Conv2d to_shape{nullptr};
    int num_domains;

private:
    torch::Tensor shared_trunk(const torch::Tensor& code, const torch::Tensor& labels);
};
TORCH_MODULE(Decoder);

// Domain classifier C over the (reversed) content code:
// C32(3)/2-C64(3)/1-C(D+1)(k)/1 conv-LReLU, global pool, FC to D logits, with
// k = min(4, H/64).
struct DomainClassifierImpl : torch::nn::Module {
    explicit DomainClassifierImpl(const Config& config);
    torch::Tensor forward(const torch::Tensor& code);

    torch::nn::Sequential body{nullptr};
    torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(DomainClassifier);

// ---------------------------------------------------------------- stage II --

struct GenerateResult {
    torch::Tensor image;
    std::vector<torch::Tensor> masks;  // one per active skip site, empty when disabled
};

// AdaRes512-AdaRes512(up)-AdaRes512-[skip 1 @ H/16]-(up)-AdaRes256-[skip 2 @ H/8]
// -(up)-AdaRes128(up)-AdaRes64(up)-AdaRes64-C3(7) tanh.
struct GeneratorImpl : torch::nn::Module {
    explicit GeneratorImpl(const Config& config);
    GenerateResult forward(const ContentCode& content, const torch::Tensor& style,
                           SkipMode mode = SkipMode::Fused);

    torch::nn::ModuleList blocks{nullptr};
    DynamicSkip skip1{nullptr}, skip2{nullptr};
    torch::nn::Conv2d to_rgb{nullptr};
    std::vector<int> sites;
};
TORCH_MODULE(Generator);

struct DiscriminatorOutput {
    torch::Tensor logits;        // [B]
    torch::Tensor style_feature; // f_D, [B, C] channel mean of the tapped block
};

// C64(3) conv-IN-LReLU, log2(H)-2 downsampling residual blocks
// (128-256-512-512-512-512, truncated), C512(4) valid conv-LReLU, 1x1 conv to
// one logit.
struct DiscriminatorImpl : torch::nn::Module {
    explicit DiscriminatorImpl(const Config& config);
    DiscriminatorOutput forward(const torch::Tensor& images);

    ConvBlock stem{nullptr};
    torch::nn::ModuleList blocks{nullptr};
    torch::nn::Conv2d head1{nullptr}, head2{nullptr};
    int tapped_block;
};
TORCH_MODULE(Discriminator);

// Noise -> style code mapper used for latent style sampling.
struct StyleMapperImpl : torch::nn::Module {
    explicit StyleMapperImpl(const Config& config);
    torch::Tensor forward(const torch::Tensor& noise);

    torch::nn::Sequential body{nullptr};
    int noise_dim;
};
TORCH_MODULE(StyleMapper);

// ----------------------------------------------------------------- bundle --

// All networks of one stage. Stage I fills ec/distill_es/decoder/classifier,
// stage II fills ec/es/generator/discriminator/mapper.
struct NetworkBundle {
    Config config;
    ContentEncoder ec{nullptr};
    DistillStyleEncoder distill_es{nullptr};
    Decoder decoder{nullptr};
    DomainClassifier classifier{nullptr};
    StyleEncoder es{nullptr};
    Generator generator{nullptr};
    Discriminator discriminator{nullptr};
    StyleMapper mapper{nullptr};
    bool mapper_trained = false;

    // Canonically named ("<net>.<param path>") parameters of every present
    // network, sorted by name.
    std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;

    // Modules by their name prefix.
    std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> modules() const;

    void train(bool on = true);
    void to(torch::Dtype dtype);

    // Noise-free content code; throws InputError on a bad image batch.
    ContentCode content_encode(const torch::Tensor& images) const;
    torch::Tensor style_encode(const torch::Tensor& images) const;
    torch::Tensor decode_appearance(const ContentCode& code, const torch::Tensor& style,
                                    const torch::Tensor& labels) const;
    torch::Tensor decode_shape(const ContentCode& code, const torch::Tensor& labels) const;
    torch::Tensor classify_domain(const torch::Tensor& code) const;
    GenerateResult generate(const ContentCode& code, const torch::Tensor& style,
                            SkipMode mode = SkipMode::Fused) const;
    DiscriminatorOutput discriminate(const torch::Tensor& images) const;
    // Throws UnavailableError until the mapper has been fitted.
    torch::Tensor sample_style(const torch::Tensor& noise) const;
};

// Builds and initialises the networks of `config.stage` from `seed`. Equal
// (config, seed) give parameter-wise identical bundles.
NetworkBundle build_networks(const Config& config, std::uint64_t seed);

// Adds N(0, std^2) noise to a content code, drawing from `gen`.
torch::Tensor inject_noise(const torch::Tensor& code, double std, at::Generator& gen);

at::Generator make_generator(std::uint64_t seed);

} // namespace gptrans
