#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gptrans/dynamic_skip.hpp"
#include "gptrans/errors.hpp"
#include "gptrans/layers.hpp"
#include "gptrans/networks.hpp"
#include "dsc_reference.hpp"
#include "support.hpp"

using namespace gptrans;

namespace {

using namespace gptrans::testing;

DynamicSkip make_unit(int hidden, int channels, std::uint64_t seed, double weight_std = 0.5) {
    DynamicSkip unit(hidden, channels);
    auto gen = make_generator(seed);
    torch::NoGradGuard ng;
    for (auto& p : unit->parameters()) p.normal_(0.0, weight_std, gen);
    return unit;
}

} // namespace

TEST(DynamicSkip, MatchesStraightLineReferenceOver100Seeds) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto unit = make_unit(2, 2, seed);
        auto gen = make_generator(1000 + seed);
        const auto h_prev = torch::randn({1, 2, 2, 2}, gen);
        const auto f_enc = torch::randn({1, 2, 4, 4}, gen);
        const auto f_gen = torch::randn({1, 2, 4, 4}, gen);
        const auto out = unit->forward(h_prev, f_enc, f_gen);
        const auto ref = reference(*unit, h_prev, f_enc, f_gen);
        worst = std::max({worst, max_diff(out.fused, ref.fused), max_diff(out.hidden, ref.hidden),
                          max_diff(out.mask, ref.mask)});
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(DynamicSkip, FusionStaysBetweenGeneratorAndEncoderFeature) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto unit = make_unit(3, 2, seed, 0.3);
        auto gen = make_generator(5000 + seed);
        const auto h_prev = torch::randn({2, 3, 2, 2}, gen);
        const auto f_enc = torch::randn({2, 2, 4, 4}, gen) * 3;
        const auto f_gen = torch::randn({2, 2, 4, 4}, gen) * 3;
        const auto out = unit->forward(h_prev, f_enc, f_gen);
        const auto f_hat = torch::leaky_relu(unit->w_e->forward(torch::cat({out.hidden, f_enc}, 1)), 0.2);
        const auto lo = torch::minimum(f_gen, f_hat) - 1e-6;
        const auto hi = torch::maximum(f_gen, f_hat) + 1e-6;
        ASSERT_TRUE((out.fused >= lo).all().item<bool>()) << "seed " << seed;
        ASSERT_TRUE((out.fused <= hi).all().item<bool>()) << "seed " << seed;
        ASSERT_TRUE((out.mask > 0).all().item<bool>());
        ASSERT_TRUE((out.mask < 1).all().item<bool>());
    }
}

TEST(DynamicSkip, MaskEndpointsSelectGeneratorOrEncoderFeature) {
    auto unit = make_unit(2, 2, 3);
    auto gen = make_generator(4);
    const auto h_prev = torch::randn({1, 2, 2, 2}, gen);
    const auto f_enc = torch::randn({1, 2, 4, 4}, gen);
    const auto f_gen = torch::randn({1, 2, 4, 4}, gen);
    torch::NoGradGuard ng;
    unit->w_m->weight.zero_();
    unit->w_m->bias.fill_(-1e4);
    auto out = unit->forward(h_prev, f_enc, f_gen);
    EXPECT_TRUE(torch::allclose(out.fused, f_gen, 0, 1e-6));

    unit->w_m->bias.fill_(1e4);
    out = unit->forward(h_prev, f_enc, f_gen);
    const auto f_hat = torch::leaky_relu(unit->w_e->forward(torch::cat({out.hidden, f_enc}, 1)), 0.2);
    EXPECT_TRUE(torch::allclose(out.fused, f_hat, 0, 1e-6));
}

TEST(DynamicSkip, ZeroMaskReturnsGeneratorFeatureExactly) {
    auto unit = make_unit(2, 3, 9);
    auto gen = make_generator(10);
    const auto h_prev = torch::randn({2, 2, 4, 4}, gen);
    const auto f_enc = torch::randn({2, 3, 8, 8}, gen);
    const auto f_gen = torch::randn({2, 3, 8, 8}, gen);
    const auto out = unit->forward(h_prev, f_enc, f_gen, true);
    EXPECT_TRUE((out.mask == 0).all().item<bool>());
    EXPECT_TRUE(torch::equal(out.fused, f_gen));
}

TEST(DynamicSkip, GradientMatchesFiniteDifferences) {
    auto unit = make_unit(2, 2, 21);
    unit->to(torch::kDouble);
    auto gen = make_generator(22);
    const auto h_prev = torch::randn({1, 2, 1, 1}, gen).to(torch::kDouble);
    const auto f_enc = torch::randn({1, 2, 2, 2}, gen).to(torch::kDouble);
    const auto f_gen = torch::randn({1, 2, 2, 2}, gen).to(torch::kDouble);
    const auto weights = torch::randn({1, 2, 2, 2}, gen).to(torch::kDouble);
    auto loss = [&](const torch::Tensor& fe) { return (unit->forward(h_prev, fe, f_gen).fused * weights).sum(); };
    EXPECT_LT(gptrans::testing::gradcheck(loss, f_enc), 1e-3);
    auto loss_h = [&](const torch::Tensor& h) { return (unit->forward(h, f_enc, f_gen).fused * weights).sum(); };
    EXPECT_LT(gptrans::testing::gradcheck(loss_h, h_prev), 1e-3);
    auto loss_g = [&](const torch::Tensor& fg) { return (unit->forward(h_prev, f_enc, fg).fused * weights).sum(); };
    EXPECT_LT(gptrans::testing::gradcheck(loss_g, f_gen), 1e-3);
}

TEST(DynamicSkip, RejectsMismatchedShapes) {
    DynamicSkip unit(2, 2);
    EXPECT_THROW(unit->forward(torch::zeros({1, 2, 2, 2}), torch::zeros({1, 2, 4, 4}), torch::zeros({1, 2, 2, 2})),
                 InputError);
    EXPECT_THROW(unit->forward(torch::zeros({1, 2, 4, 4}), torch::zeros({1, 2, 4, 4}), torch::zeros({1, 2, 4, 4})),
                 InputError);
    EXPECT_THROW(unit->forward(torch::zeros({1, 2, 2, 2}), torch::zeros({1, 3, 4, 4}), torch::zeros({1, 3, 4, 4})),
                 InputError);
}

TEST(MaskSparsity, AnalyticValues) {
    EXPECT_DOUBLE_EQ(mask_sparsity({torch::zeros({2, 4, 4, 4})}).item<double>(), 0.0);
    EXPECT_DOUBLE_EQ(mask_sparsity({torch::ones({2, 4, 4, 4}), torch::ones({2, 2, 8, 8})}).item<double>(), 2.0);
    EXPECT_DOUBLE_EQ(
        mask_sparsity({torch::full({1, 3, 4, 4}, 0.5), torch::full({1, 3, 8, 8}, 0.25)}).item<double>(), 0.75);
    EXPECT_THROW(mask_sparsity({}), InputError);
}
