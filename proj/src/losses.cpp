#include "gptrans/losses.hpp"

#include <cmath>
#include <sstream>

#include "gptrans/errors.hpp"
#include "gptrans/layers.hpp"
#include "gptrans/rng.hpp"

namespace gptrans {
namespace {

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes())) {
        throw InputError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                         c10::str(b.sizes()));
    }
}

void check_finite(const char* name, const torch::Tensor& t) {
    if (!t.defined()) throw InputError(std::string("loss term '") + name + "' is missing");
    const double v = t.item<double>();
    if (!std::isfinite(v)) {
        throw DivergenceError(name, std::string("loss term '") + name + "' is not finite");
    }
}

} // namespace

// ------------------------------------------------------------ perceptual ---

RandomPyramidExtractor::RandomPyramidExtractor(std::uint64_t seed) : seed_(seed) {
    struct Level {
        int in, out, stride;
    };
    const Level levels[] = {{3, 16, 1}, {16, 32, 2}, {32, 64, 2}, {64, 64, 2}, {64, 64, 2}};
    SplitMix64 rng(seed);
    for (const auto& level : levels) {
        const int fan_in = level.in * 9;
        const double std = std::sqrt(2.0 / fan_in);
        std::vector<float> w(static_cast<std::size_t>(level.out) * level.in * 9);
        for (auto& v : w) v = static_cast<float>(rng.gaussian() * std);
        weights_.push_back(torch::from_blob(w.data(), {level.out, level.in, 3, 3}, torch::kFloat32).clone());
        biases_.push_back(torch::zeros({level.out}));
    }
}

std::vector<torch::Tensor> RandomPyramidExtractor::features(const torch::Tensor& images) const {
    std::vector<torch::Tensor> out;
    auto h = images;
    const long strides[] = {1, 2, 2, 2, 2};
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const auto w = weights_[i].to(images.dtype());
        const auto b = biases_[i].to(images.dtype());
        h = torch::leaky_relu(torch::conv2d(h, w, b, strides[i], 1), kLeakySlope);
        out.push_back(h);
    }
    return out;
}

std::string RandomPyramidExtractor::id() const { return "random-pyramid-v1:seed=" + std::to_string(seed_); }

std::shared_ptr<PerceptualExtractor> make_perceptual(const Config& config) {
    if (config.perceptual == "identity") return std::make_shared<IdentityExtractor>();
    if (config.perceptual == "random-pyramid") return std::make_shared<RandomPyramidExtractor>(config.perceptual_seed);
    throw ConfigError("unknown perceptual extractor '" + config.perceptual + "'");
}

torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& p) {
    same_shape(a, b, "perceptual");
    const auto fa = p.features(a);
    const auto fb = p.features(b);
    auto total = (fa[0] - fb[0]).abs().mean();
    for (std::size_t i = 1; i < fa.size(); ++i) total = total + (fa[i] - fb[i]).abs().mean();
    return total / static_cast<double>(fa.size());
}

// -------------------------------------------------------------- stage I ----

torch::Tensor loss_arec(const torch::Tensor& recon, const torch::Tensor& target, const PerceptualExtractor& p) {
    same_shape(recon, target, "loss_arec");
    return (recon - target).square().mean() + perceptual_distance(recon, target, p);
}

torch::Tensor loss_srec(const torch::Tensor& pred, const torch::Tensor& gt, double lambda_s) {
    same_shape(pred, gt, "loss_srec");
    return lambda_s * (pred - gt).abs().mean();
}

torch::Tensor loss_dis(const torch::Tensor& code_x, const torch::Tensor& code_y, const torch::Tensor& shape_from_y,
                       const torch::Tensor& gt_x, double lambda_s) {
    same_shape(code_x, code_y, "loss_dis codes");
    same_shape(shape_from_y, gt_x, "loss_dis shapes");
    return (code_x - code_y).abs().mean() + lambda_s * (shape_from_y - gt_x).abs().mean();
}

RegTerms loss_reg(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& code,
                  double lambda_r) {
    if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0)) {
        throw InputError("loss_reg: logits must be [B, D] with [B] labels");
    }
    if (labels.numel() > 0 && (labels.min().item<std::int64_t>() < 0 ||
                               labels.max().item<std::int64_t>() >= logits.size(1))) {
        throw InputError("loss_reg: domain label out of range");
    }
    RegTerms out;
    out.classifier = torch::nn::functional::cross_entropy(logits, labels);
    const auto flat = code.flatten(1);
    const double per_element = 1.0 / std::sqrt(static_cast<double>(flat.size(1)));
    out.norm = lambda_r * (torch::linalg_vector_norm(flat, 2, {1}, false, c10::nullopt) * per_element).mean();
    return out;
}

// ------------------------------------------------------------- stage II ----

torch::Tensor loss_adv_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
    return torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
}

torch::Tensor loss_adv_g(const torch::Tensor& fake_logits) { return torch::softplus(-fake_logits).mean(); }

torch::Tensor loss_adv_d(DiscriminatorImpl& d, const torch::Tensor& real, const torch::Tensor& fake) {
    same_shape(real, fake, "loss_adv_d");
    return loss_adv_d(d.forward(real).logits, d.forward(fake.detach()).logits);
}

torch::Tensor loss_adv_g(DiscriminatorImpl& d, const torch::Tensor& fake) {
    return loss_adv_g(d.forward(fake).logits);
}

torch::Tensor loss_sty(const torch::Tensor& fd_fake, const torch::Tensor& fd_ref) {
    same_shape(fd_fake, fd_ref, "loss_sty");
    return (fd_fake - fd_ref).abs().mean();
}

torch::Tensor loss_con(const torch::Tensor& code_out, const torch::Tensor& code_in) {
    same_shape(code_out, code_in, "loss_con");
    return (code_out - code_in).abs().mean();
}

torch::Tensor loss_rec(const torch::Tensor& recon, const torch::Tensor& target, const PerceptualExtractor& p) {
    same_shape(recon, target, "loss_rec");
    return (recon - target).abs().mean() + perceptual_distance(recon, target, p);
}

// --------------------------------------------------------------- totals ----

WeightedTotal stage1_total(const Stage1Terms& t) {
    const std::pair<const char*, const torch::Tensor*> named[] = {
        {"arec", &t.arec}, {"srec", &t.srec}, {"dis", &t.dis}, {"reg", &t.reg}};
    WeightedTotal out;
    for (const auto& [name, term] : named) {
        check_finite(name, *term);
        out.report.terms[name] = term->item<double>();
        out.total = out.total.defined() ? out.total + *term : *term;
    }
    out.report.total = out.total.item<double>();
    return out;
}

WeightedTotal stage2_total(const Stage2Terms& t, const Config& c) {
    std::vector<std::tuple<const char*, const torch::Tensor*, double>> named = {
        {"adv", &t.adv, 1.0},
        {"con", &t.con, c.lambda_con},
        {"sty", &t.sty, c.lambda_sty},
        {"msk", &t.msk, c.lambda_msk},
        {"rec", &t.rec, c.lambda_rec},
    };
    if (t.id.defined()) named.emplace_back("id", &t.id, c.lambda_id);
    WeightedTotal out;
    for (const auto& [name, term, weight] : named) {
        check_finite(name, *term);
        out.report.terms[name] = term->item<double>();
        const auto weighted = *term * weight;
        out.total = out.total.defined() ? out.total + weighted : weighted;
    }
    out.report.total = out.total.item<double>();
    return out;
}

} // namespace gptrans
