#include "gptrans/metrics.hpp"

#include <cmath>
#include <limits>

#include "gptrans/dataset.hpp"
#include "gptrans/errors.hpp"

namespace gptrans {

namespace {
void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw InputError(std::string(what) + ": shape mismatch");
}
} // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    same_shape(a, b, "psnr");
    const double mse = (a.to(torch::kDouble) - b.to(torch::kDouble)).square().mean().item<double>();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);
}

double mask_iou(const torch::Tensor& pred, const torch::Tensor& target, double threshold) {
    same_shape(pred, target, "mask_iou");
    const auto p = pred > threshold;
    const auto t = target > threshold;
    const double inter = (p & t).sum().item<double>();
    const double uni = (p | t).sum().item<double>();
    return uni == 0.0 ? 1.0 : inter / uni;
}

double soft_iou(const torch::Tensor& pred, const torch::Tensor& target) {
    same_shape(pred, target, "soft_iou");
    const auto p = pred.to(torch::kDouble);
    const auto t = target.to(torch::kDouble);
    if ((p < 0).any().item<bool>() || (t < 0).any().item<bool>()) throw InputError("soft_iou: masks must be nonnegative");
    const double uni = torch::maximum(p, t).sum().item<double>();
    return uni == 0.0 ? 1.0 : torch::minimum(p, t).sum().item<double>() / uni;
}

double content_distance(const torch::Tensor& a, const torch::Tensor& b) {
    same_shape(a, b, "content_distance");
    return (a.to(torch::kDouble) - b.to(torch::kDouble)).abs().mean().item<double>();
}

double accuracy(const torch::Tensor& logits, const torch::Tensor& labels) {
    if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0)) {
        throw InputError("accuracy: expected [N, D] logits and [N] labels");
    }
    return (logits.argmax(1) == labels).to(torch::kDouble).mean().item<double>();
}

double mean_pairwise_l1(const torch::Tensor& batch) {
    const auto n = batch.size(0);
    if (n < 2) throw InputError("mean_pairwise_l1: need at least two samples");
    const auto flat = batch.reshape({n, -1}).to(torch::kDouble);
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = i + 1; j < n; ++j, ++count) sum += (flat[i] - flat[j]).abs().mean().item<double>();
    }
    return sum / static_cast<double>(count);
}

double centroid_distance(const torch::Tensor& mask_a, const torch::Tensor& mask_b) {
    const auto [ra, ca] = mask_centroid(mask_a);
    const auto [rb, cb] = mask_centroid(mask_b);
    return std::hypot(ra - rb, ca - cb);
}

} // namespace gptrans
