#include "selfc/errors.hpp"
#include "selfc/tensorblocks.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace selfc;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

int64_t mirror(int64_t j, int64_t n) {
    if (n == 1)
        return 0;
    while (j < 0 || j >= n)
        j = j < 0 ? -j : 2 * (n - 1) - j;
    return j;
}

double keys(double x) {
    const double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0)
        return (a + 2) * x * x * x - (a + 3) * x * x + 1;
    if (x < 2.0)
        return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
    return 0.0;
}

/// Direct 2-D evaluation of one output pixel from its full tap neighborhood.
torch::Tensor naive_bicubic(const torch::Tensor& img, int k, bool down) {
    const int64_t h = img.size(0), w = img.size(1);
    const int64_t oh = down ? h / k : h * k, ow = down ? w / k : w * k;
    const double stretch = down ? k : 1.0;
    const double ratio = down ? k : 1.0 / k;
    auto out = torch::zeros({oh, ow}, kF64);
    auto src = img.accessor<double, 2>();
    for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
            const double cy = (i + 0.5) * ratio - 0.5, cx = (j + 0.5) * ratio - 0.5;
            double acc = 0.0, norm = 0.0;
            for (int64_t y = static_cast<int64_t>(std::floor(cy - 2 * stretch));
                 y <= static_cast<int64_t>(std::ceil(cy + 2 * stretch)); ++y)
                for (int64_t x = static_cast<int64_t>(std::floor(cx - 2 * stretch));
                     x <= static_cast<int64_t>(std::ceil(cx + 2 * stretch)); ++x) {
                    const double wt = keys((y - cy) / stretch) * keys((x - cx) / stretch);
                    acc += wt * src[mirror(y, h)][mirror(x, w)];
                    norm += wt;
                }
            out[i][j] = acc / norm;
        }
    return out;
}

torch::Tensor naive_blur(const torch::Tensor& img, double sigma) {
    const int r = static_cast<int>(std::floor(4 * sigma));
    const int64_t h = img.size(0), w = img.size(1);
    auto out = torch::zeros({h, w}, kF64);
    auto src = img.accessor<double, 2>();
    double norm = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            norm += std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    acc += std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma)) * src[mirror(i + dy, h)][mirror(j + dx, w)];
            out[i][j] = acc / norm;
        }
    return out;
}

} // namespace

TEST(CubicKernel, KnownValuesAndPartitionOfUnity) {
    EXPECT_DOUBLE_EQ(cubic_kernel(0.0), 1.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(1.0), 0.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(2.0), 0.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
    EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
    for (double t : {0.0, 0.13, 0.5, 0.77}) {
        double sum = 0.0;
        for (int j = -3; j <= 3; ++j)
            sum += cubic_kernel(t - j);
        EXPECT_NEAR(sum, 1.0, 1e-15);
    }
}

TEST(Bicubic, MatchesDirectTwoDimensionalEvaluation) {
    torch::manual_seed(0);
    for (int k : {2, 4}) {
        auto img = torch::rand({4 * k, 3 * k}, kF64);
        auto clip = img.view({1, 1, 1, 4 * k, 3 * k});
        auto down = bicubic_resample(clip, Scale::downscale(k))[0][0][0];
        EXPECT_LT((down - naive_bicubic(img, k, true)).abs().max().item<double>(), 1e-12) << "k=" << k;
        auto small = torch::rand({5, 3}, kF64);
        auto up = bicubic_resample(small.view({1, 1, 1, 5, 3}), Scale::upscale(k))[0][0][0];
        EXPECT_LT((up - naive_bicubic(small, k, false)).abs().max().item<double>(), 1e-12) << "k=" << k;
    }
}

TEST(Bicubic, PreservesConstantsAndInteriorRamps) {
    auto flat = torch::full({1, 2, 3, 8, 8}, 0.37, kF64);
    EXPECT_LT((bicubic_resample(flat, Scale::downscale(2)) - 0.37).abs().max().item<double>(), 1e-14);
    EXPECT_LT((bicubic_resample(flat, Scale::upscale(4)) - 0.37).abs().max().item<double>(), 1e-14);
    // Cubic convolution reproduces linear functions away from the borders.
    auto ramp = torch::arange(16, kF64).view({1, 1, 1, 1, 16}).expand({1, 1, 1, 4, 16}).contiguous();
    auto up = bicubic_resample(ramp, Scale::upscale(2))[0][0][0][1];
    for (int64_t j = 6; j < 26; ++j)
        EXPECT_NEAR(up[j].item<double>(), (j + 0.5) / 2.0 - 0.5, 1e-12);
}

TEST(Bicubic, RejectsIndivisibleSizes) {
    EXPECT_THROW(bicubic_resample(torch::zeros({1, 1, 3, 5, 4}), Scale::downscale(2)), DimensionError);
    EXPECT_THROW(bicubic_resample(torch::zeros({3, 5, 4}), Scale::downscale(2)), DimensionError);
}

TEST(GaussianBlur, RadiusConvention) {
    EXPECT_EQ(gaussian_radius(1.6), 6);
    EXPECT_EQ(2 * gaussian_radius(1.6) + 1, 13);
    EXPECT_EQ(gaussian_radius(1.0), 4);
    EXPECT_THROW(gaussian_radius(0.0), DomainError);
}

TEST(GaussianBlur, MatchesDirectTwoDimensionalConvolution) {
    torch::manual_seed(1);
    auto img = torch::rand({11, 14}, kF64);
    for (double sigma : {1.0, 1.6}) {
        auto out = gaussian_blur(img.view({1, 1, 1, 11, 14}), sigma)[0][0][0];
        EXPECT_LT((out - naive_blur(img, sigma)).abs().max().item<double>(), 1e-12) << sigma;
    }
}

TEST(PixelShuffle, ChannelLayoutAndRoundTrip) {
    const int k = 2;
    auto x = torch::arange(2 * 3 * 4 * 6, kF64).view({1, 2, 3, 4, 6});
    auto u = pixel_unshuffle(x, k);
    ASSERT_EQ(u.sizes(), (std::vector<int64_t>{1, 2, 12, 2, 3}));
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t dy = 0; dy < k; ++dy)
                for (int64_t dx = 0; dx < k; ++dx)
                    for (int64_t i = 0; i < 2; ++i)
                        for (int64_t j = 0; j < 3; ++j)
                            ASSERT_EQ(u[0][t][c * k * k + dy * k + dx][i][j].item<double>(),
                                      x[0][t][c][i * k + dy][j * k + dx].item<double>());
    EXPECT_TRUE(torch::equal(pixel_shuffle(u, k), x));
    EXPECT_THROW(pixel_unshuffle(torch::zeros({1, 1, 3, 5, 4}), 2), DimensionError);
    EXPECT_THROW(pixel_shuffle(torch::zeros({1, 1, 6, 2, 2}), 2), DimensionError);
}

TEST(QuantizeSte, ForwardRoundsBackwardPassesInsideRange) {
    auto f = torch::tensor({-0.2, 0.0, 0.1234, 0.5, 0.999, 1.3}, kF64).view({1, 1, 1, 1, 6}).set_requires_grad(true);
    auto q = quantize_ste(f);
    auto expect = torch::tensor({0.0, 0.0, 31.0 / 255, 128.0 / 255, 1.0, 1.0}, kF64).view({1, 1, 1, 1, 6});
    EXPECT_LT((q.detach() - expect).abs().max().item<double>(), 1e-15);
    q.sum().backward();
    auto g = f.grad().view(-1);
    EXPECT_EQ(g[0].item<double>(), 0.0);
    for (int i = 1; i < 5; ++i)
        EXPECT_EQ(g[i].item<double>(), 1.0);
    EXPECT_EQ(g[5].item<double>(), 0.0);
}

TEST(CheckClip, RejectsNonClips) {
    EXPECT_THROW(check_clip(torch::zeros({2, 3, 4, 5}), "x"), DimensionError);
    EXPECT_THROW(check_clip(torch::zeros({1, 0, 3, 4, 4}), "x"), DimensionError);
    EXPECT_THROW(check_clip(torch::Tensor(), "x"), DimensionError);
    EXPECT_NO_THROW(check_clip(torch::zeros({1, 1, 3, 4, 4}), "x"));
}

TEST(DenseBlock, ZeroInitStartsAsResidualPath) {
    torch::manual_seed(2);
    auto x = torch::rand({2, 3, 5, 6, 6});
    DenseBlock plain(DenseBlockOptions(5, 7));
    EXPECT_EQ(plain->forward(x).abs().max().item<double>(), 0.0);
    EXPECT_EQ(plain->forward(x).sizes(), (std::vector<int64_t>{2, 3, 7, 6, 6}));
    DenseBlock residual(DenseBlockOptions(5, 5).residual(true));
    EXPECT_TRUE(torch::equal(residual->forward(x), x));
    EXPECT_EQ(plain->stages().size(), 5u);
}

TEST(DenseBlock, TemporalVariantMixesNeighbouringFramesOnly) {
    torch::manual_seed(3);
    auto x = torch::rand({1, 4, 3, 6, 6});
    auto bumped = x.clone();
    bumped[0][0] += 0.5;
    DenseBlock spatial(DenseBlockOptions(3, 3).temporal(false).zero_init(false));
    DenseBlock temporal(DenseBlockOptions(3, 3).temporal(true).zero_init(false));
    auto ds = (spatial->forward(bumped) - spatial->forward(x)).abs().amax({2, 3, 4})[0];
    auto dt = (temporal->forward(bumped) - temporal->forward(x)).abs().amax({2, 3, 4})[0];
    EXPECT_EQ(ds[1].item<double>(), 0.0);
    EXPECT_GT(dt[1].item<double>(), 0.0);
    // A single 3x1x1 stage reaches one frame in each direction.
    EXPECT_EQ(dt[2].item<double>(), 0.0);
    EXPECT_EQ(dt[3].item<double>(), 0.0);
}

TEST(DenseBlock, RejectsWrongChannelCount) {
    DenseBlock block(DenseBlockOptions(4, 4));
    EXPECT_THROW(block->forward(torch::zeros({1, 2, 3, 4, 4})), DimensionError);
}

TEST(CouplingBlock, ZeroWeightsGiveIdentity) {
    CouplingBlock block(CouplingOptions(3, 12));
    auto x = torch::rand({1, 2, 15, 4, 4});
    EXPECT_TRUE(torch::equal(block->forward(x), x));
    EXPECT_TRUE(torch::equal(block->inverse(x), x));
}

TEST(CouplingBlock, InverseUndoesForward) {
    torch::manual_seed(4);
    CouplingBlock block(CouplingOptions(3, 12).zero_init(false));
    block->to(torch::kFloat64);
    auto x = torch::rand({2, 3, 15, 5, 5}, kF64);
    EXPECT_LT((block->inverse(block->forward(x)) - x).abs().max().item<double>(), 1e-12);
    EXPECT_LT((block->forward(block->inverse(x)) - x).abs().max().item<double>(), 1e-12);
}

TEST(CouplingBlock, LogScaleStaysWithinClamp) {
    torch::manual_seed(5);
    CouplingBlock block(CouplingOptions(3, 12).zero_init(false).scale_clamp(1.0));
    {
        torch::NoGradGuard g;
        for (auto& p : block->scale_hf()->parameters())
            p.mul_(50.0);
        for (auto& p : block->shift_hf()->parameters())
            p.zero_();
    }
    auto x = torch::rand({1, 2, 15, 4, 4}, kF64) + 0.5;
    block->to(torch::kFloat64);
    auto y = block->forward(x);
    auto ratio = (y.narrow(2, 3, 12) / x.narrow(2, 3, 12)).log().abs();
    EXPECT_LE(ratio.max().item<double>(), 1.0 + 1e-12);
}

TEST(CouplingBlock, RejectsWrongSplit) {
    CouplingBlock block(CouplingOptions(3, 12));
    EXPECT_THROW(block->forward(torch::zeros({1, 1, 14, 4, 4})), DimensionError);
}
