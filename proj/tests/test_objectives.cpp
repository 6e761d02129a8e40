#include "selfc/errors.hpp"
#include "selfc/objectives.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace selfc;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

} // namespace

TEST(Losses, ConditionalIsBatchAveragedNegativeLogLikelihood) {
    torch::manual_seed(0);
    auto raw = [] { return torch::randn({2, 2, 12, 3, 3, 4}, kF64); };
    auto g = GMMField::from_raw(raw(), raw(), raw());
    auto f = torch::randn({2, 2, 12, 3, 3}, kF64);
    const double expect = -gmm_log_density(f, g).sum().item<double>() / 2.0;
    EXPECT_NEAR(loss_conditional(f, g).item<double>(), expect, 1e-10);
    // Doubling the batch by duplication leaves the value unchanged.
    auto g2 = GMMField{torch::cat({g.log_weights, g.log_weights}), torch::cat({g.means, g.means}),
                       torch::cat({g.logvars, g.logvars})};
    EXPECT_NEAR(loss_conditional(torch::cat({f, f}), g2).item<double>(), expect, 1e-10);
}

TEST(Losses, MimicReconsPenalize) {
    torch::manual_seed(1);
    auto x = torch::rand({1, 2, 3, 8, 8}, kF64);
    auto down = bicubic_resample(x, Scale::downscale(2));
    EXPECT_EQ(loss_mimic(down, x, 2).item<double>(), 0.0);
    EXPECT_NEAR(loss_mimic(down + 0.1, x, 2).item<double>(), 0.01, 1e-15);

    auto y = x.clone();
    y.view(-1)[0] += 0.6;
    EXPECT_NEAR(loss_recons(x, y).item<double>(), 0.6 / x.numel(), 1e-15);
    EXPECT_THROW(loss_recons(x, down), DimensionError);
    EXPECT_THROW(loss_mimic(x, x, 2), DimensionError);

    FrequencyTransform t(TransformOptions(2));
    t->to(torch::kFloat64);
    auto f = analyze(x, t);
    EXPECT_LT(loss_penalize(x, f, t).item<double>(), 1e-28);
    f.high = f.high + 0.5;
    EXPECT_GT(loss_penalize(x, f, t).item<double>(), 1e-3);
}

TEST(Losses, TotalWeighsMimicByKSquared) {
    auto one = torch::ones({}, kF64);
    SelfcLossParts parts{one * 10.0, one * 2.0, one * 3.0, one * 5.0};
    for (int k : {2, 4}) {
        auto w = LossWeights::rescaling(k);
        const double expect = 0.01 * 10.0 + 1.0 * k * k * 2.0 + 3.0 + 5.0;
        EXPECT_NEAR(loss_total_selfc(parts, w).item<double>(), expect, 1e-12);
        auto c = LossWeights::compression(k);
        EXPECT_DOUBLE_EQ(c.recons, 0.1);
        EXPECT_EQ(c.k, k);
    }
    EXPECT_NEAR(loss_total_compression(one * 2.0, one * 0.5, 4.0).item<double>(), 4.0, 1e-15);
}

TEST(ConditionalSchedule, ConstantThenLinearToZero) {
    const int64_t total = 100;
    for (int64_t i = 0; i < 50; ++i)
        EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, i, total), 0.01);
    EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, 99, total), 0.0);
    double prev = 0.01;
    for (int64_t i = 50; i < total; ++i) {
        const double v = conditional_weight_at(0.01, i, total);
        EXPECT_LE(v, prev);
        EXPECT_NEAR(v, 0.01 * (99 - i) / 49.0, 1e-15);
        prev = v;
    }
    // Without a decay phase the weight only drops at the very end.
    EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, 98, total, 0.0), 0.01);
    EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, 99, total, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, 0, total, 1.0), 0.01);
    EXPECT_DOUBLE_EQ(conditional_weight_at(0.01, 0, 1), 0.0);
}

TEST(Pearson, MatchesNaiveOracle) {
    torch::manual_seed(2);
    auto a = torch::randn({6, 3}, kF64);
    auto b = 0.5 * a + torch::randn({6, 3}, kF64);
    double mean = 0.0;
    for (int64_t j = 0; j < 3; ++j) {
        std::vector<double> va, vb;
        for (int64_t i = 0; i < 6; ++i) {
            va.push_back(a[i][j].item<double>());
            vb.push_back(b[i][j].item<double>());
        }
        mean += naive_pearson(va, vb) / 3.0;
    }
    EXPECT_NEAR(pearson_rho(a, b, 0.0).item<double>(), mean, 1e-12);
}

TEST(Pearson, LimitsAndDegenerateCases) {
    auto a = torch::randn({8, 2, 2}, kF64);
    EXPECT_NEAR(pearson_rho(a, 3.0 * a + 1.0).item<double>(), 1.0, 1e-6);
    EXPECT_NEAR(pearson_rho(a, -a).item<double>(), -1.0, 1e-6);
    auto constant = torch::ones({8, 2, 2}, kF64);
    EXPECT_EQ(pearson_rho(a, constant).item<double>(), 0.0);
    EXPECT_THROW(pearson_rho(a[0].unsqueeze(0), a[0].unsqueeze(0)), InsufficientSampleError);
    EXPECT_THROW(pearson_rho(a, constant[0]), DimensionError);
}

TEST(Pearson, GradientFiniteOnConstantLocations) {
    auto a = torch::ones({4, 3}, kF64).requires_grad_();
    auto b = torch::randn({4, 3}, kF64);
    pearson_rho(a, b).backward();
    EXPECT_TRUE(torch::isfinite(a.grad()).all().item<bool>());
}

TEST(CodecLoss, MeanSquareMinusWeightedCorrelation) {
    torch::manual_seed(3);
    auto eta = torch::rand({4, 1, 3, 4, 4}, kF64);
    auto phi = eta + 0.1 * torch::randn({4, 1, 3, 4, 4}, kF64);
    const double mse = (eta - phi).square().mean().item<double>();
    const double rho = pearson_rho(eta, phi).item<double>();
    EXPECT_NEAR(loss_codec(eta, phi, 1e-5).item<double>(), mse - 1e-5 * rho, 1e-15);
    EXPECT_NEAR(loss_codec(eta, phi, torch::full({}, 0.25, kF64), 2.0).item<double>(), mse - 0.5, 1e-15);
}
