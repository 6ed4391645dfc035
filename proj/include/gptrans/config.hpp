#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gptrans {

inline constexpr int kStyleDim = 256;

// Every tunable of the framework in one flat record. The text form is
// `key = value` per line, `#` starts a comment; `print-config` writes the
// defaults in exactly this form and that output parses back.
struct Config {
    // networks
    int stage = 1;
    int image_size = 64;
    int num_domains = 2;
    int channel_divisor = 1;         // all conv widths divided by this
    double content_noise_std = 1.0;  // stage I only
    int style_feature_block = 4;     // D residual block whose channel mean is f_D
    std::vector<int> dsc_sites{1, 2};
    bool rec_through_dsc = false;
    std::string perceptual = "random-pyramid";
    std::uint64_t perceptual_seed = 1234;

    // optimisation
    double lr_stage1 = 0.0002;
    double lr_stage2 = 0.0001;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.99;
    int batch_pairs = 16;
    int batch_real = 16;
    int batch = 16;
    int stage1_iterations = 44000;
    int stage2_iterations = 75000;
    int checkpoint_every = 1000;
    std::uint64_t seed = 0;
    int threads = 1;

    // loss weights
    double lambda_s = 5.0;
    double lambda_r = 0.001;
    double lambda_con = 1.0;
    double lambda_sty = 50.0;
    double lambda_msk = 1.0;
    double lambda_rec = 1.0;
    double lambda_id = 0.0;  // weight of the optional identity-loss hook

    // style mapper
    int mapper_noise_dim = 64;
    int mapper_hidden = 256;
    int mapper_rounds = 40;
    int mapper_steps_per_round = 50;
    int mapper_candidates = 2;  // noise draws per data point per round
    double mapper_lr = 0.0005;
    int mapper_min_samples = 500;

    // Throws ConfigError on any inconsistent value.
    void validate() const;

    // Sets one key from its text form. Unknown keys and unparsable values are
    // ConfigErrors.
    void set(const std::string& key, const std::string& value);

    std::string to_text() const;
    static Config parse_text(const std::string& text);
    static Config load(const std::filesystem::path& path);

    nlohmann::json to_json() const;
    static Config from_json(const nlohmann::json& j);

    static std::vector<std::string> keys();
};

} // namespace gptrans
