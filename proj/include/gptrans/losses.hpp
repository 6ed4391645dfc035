#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gptrans/config.hpp"
#include "gptrans/networks.hpp"

namespace gptrans {

// Fixed feature map used by the perceptual terms. Parameters never train.
class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;
    virtual std::vector<torch::Tensor> features(const torch::Tensor& images) const = 0;
    virtual std::string id() const = 0;
};

// Returns the image itself as the only feature. Used for hand-checkable tests.
class IdentityExtractor final : public PerceptualExtractor {
public:
    std::vector<torch::Tensor> features(const torch::Tensor& images) const override { return {images}; }
    std::string id() const override { return "identity"; }
};

// Five conv-LReLU blocks (3->16 stride 1, then 32, 64, 64, 64 at stride 2) with
// weights drawn from SplitMix64 so the extractor is identical on every
// platform. Each block output is one feature level.
class RandomPyramidExtractor final : public PerceptualExtractor {
public:
    explicit RandomPyramidExtractor(std::uint64_t seed);
    std::vector<torch::Tensor> features(const torch::Tensor& images) const override;
    std::string id() const override;

private:
    std::uint64_t seed_;
    std::vector<torch::Tensor> weights_;
    std::vector<torch::Tensor> biases_;
};

// Builds the extractor named by config.perceptual.
std::shared_ptr<PerceptualExtractor> make_perceptual(const Config& config);

// Mean over feature levels of the per-level mean absolute difference.
torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& p);

// ---- stage I ----

// MSE(x_bar, x) + perceptual(x_bar, x).
torch::Tensor loss_arec(const torch::Tensor& recon, const torch::Tensor& target, const PerceptualExtractor& p);

// lambda_s * mean |pred - gt|.
torch::Tensor loss_srec(const torch::Tensor& pred, const torch::Tensor& gt, double lambda_s);

// mean |code_x - code_y| + lambda_s * mean |shape_from_y - gt_x|.
torch::Tensor loss_dis(const torch::Tensor& code_x, const torch::Tensor& code_y, const torch::Tensor& shape_from_y,
                       const torch::Tensor& gt_x, double lambda_s);

struct RegTerms {
    torch::Tensor classifier;  // cross-entropy of the classifier logits
    torch::Tensor norm;        // lambda_r * RMS of the code, averaged over the batch
};

// `logits` should come from the classifier applied to grad_reverse(code) so
// one descent step trains the classifier and pushes the encoder to confuse it.
RegTerms loss_reg(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& code,
                  double lambda_r);

// ---- stage II ----

// Logistic discriminator loss on raw logits: softplus(-real) + softplus(fake).
torch::Tensor loss_adv_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
// Non-saturating generator loss: softplus(-fake) = -log sigmoid(fake).
torch::Tensor loss_adv_g(const torch::Tensor& fake_logits);

// Convenience forms evaluating D; the fake batch is detached for the D loss.
torch::Tensor loss_adv_d(DiscriminatorImpl& d, const torch::Tensor& real, const torch::Tensor& fake);
torch::Tensor loss_adv_g(DiscriminatorImpl& d, const torch::Tensor& fake);

// mean |f_D(fake) - f_D(ref)|.
torch::Tensor loss_sty(const torch::Tensor& fd_fake, const torch::Tensor& fd_ref);
// mean |Ec(y_hat) - Ec(x)|.
torch::Tensor loss_con(const torch::Tensor& code_out, const torch::Tensor& code_in);
// mean |y_bar - y| + perceptual(y_bar, y).
torch::Tensor loss_rec(const torch::Tensor& recon, const torch::Tensor& target, const PerceptualExtractor& p);

// ---- totals ----

// Unweighted term values and their weighted total.
struct LossReport {
    std::map<std::string, double> terms;
    double total = 0.0;
};

struct Stage1Terms {
    torch::Tensor arec, srec, dis, reg;
};

struct Stage2Terms {
    torch::Tensor adv, con, sty, msk, rec;
    torch::Tensor id;  // optional identity-hook term
};

struct WeightedTotal {
    torch::Tensor total;  // differentiable
    LossReport report;
};

// arec + srec + dis + reg (the weights already live inside the terms).
// Throws DivergenceError naming the first non-finite term.
WeightedTotal stage1_total(const Stage1Terms& terms);

// adv + l1*con + l2*sty + l3*msk + l4*rec (+ l_id*id).
WeightedTotal stage2_total(const Stage2Terms& terms, const Config& config);

} // namespace gptrans
