#pragma once

#include <utility>

#include <torch/torch.h>

namespace gptrans {

// PSNR in dB for images in [-1, 1] (peak-to-peak range 2).
double psnr(const torch::Tensor& a, const torch::Tensor& b);

// Intersection over union of `pred > threshold` and `target > threshold`,
// pooled over the whole batch. Returns 1 when both are empty.
double mask_iou(const torch::Tensor& pred, const torch::Tensor& target, double threshold = 0.5);

// Weighted Jaccard sum(min) / sum(max) of two nonnegative soft masks, pooled
// over the batch. Equals mask_iou on binary inputs.
double soft_iou(const torch::Tensor& pred, const torch::Tensor& target);

// Mean absolute difference between content codes of row-aligned batches.
double content_distance(const torch::Tensor& a, const torch::Tensor& b);

// Fraction of rows whose argmax equals the label.
double accuracy(const torch::Tensor& logits, const torch::Tensor& labels);

// Mean L1 distance over all unordered pairs of a [N, ...] batch.
double mean_pairwise_l1(const torch::Tensor& batch);

// Euclidean distance in pixels between the centroids of two masks.
double centroid_distance(const torch::Tensor& mask_a, const torch::Tensor& mask_b);

} // namespace gptrans
