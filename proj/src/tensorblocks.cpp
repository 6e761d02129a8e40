#include "selfc/tensorblocks.hpp"

#include "selfc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace selfc {

namespace {

std::string shape_str(const torch::Tensor& t) {
    std::ostringstream os;
    os << t.sizes();
    return os.str();
}

int64_t reflect_index(int64_t j, int64_t n) {
    if (n == 1)
        return 0;
    const int64_t period = 2 * (n - 1);
    j = std::abs(j) % period;
    return j >= n ? period - j : j;
}

} // namespace

void check_clip(const VideoClip& clip, std::string_view name) {
    if (!clip.defined() || clip.dim() != 5)
        throw DimensionError(std::string(name) + ": expected a 5-D (B,T,C,H,W) clip, got " +
                             (clip.defined() ? shape_str(clip) : std::string("undefined")));
    for (int64_t s : clip.sizes())
        if (s < 1)
            throw DimensionError(std::string(name) + ": empty axis in " + shape_str(clip));
}

double cubic_kernel(double x, double a) {
    x = std::abs(x);
    if (x <= 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
    return 0.0;
}

torch::Tensor bicubic_matrix(int64_t in_size, Scale scale, torch::TensorOptions options) {
    const int k = scale.factor;
    if (k < 1)
        throw DomainError("bicubic_matrix: scale factor must be positive");
    if (scale.down && in_size % k != 0)
        throw DimensionError("bicubic_resample: size " + std::to_string(in_size) +
                             " is not divisible by " + std::to_string(k));
    const int64_t out_size = scale.down ? in_size / k : in_size * k;
    // Downscaling widens the kernel support by k so the filter stays antialiased.
    const double stretch = scale.down ? static_cast<double>(k) : 1.0;
    const double ratio = scale.down ? static_cast<double>(k) : 1.0 / k;

    auto m = torch::zeros({out_size, in_size}, torch::kFloat64);
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < out_size; ++i) {
        const double center = (i + 0.5) * ratio - 0.5;
        const auto lo = static_cast<int64_t>(std::floor(center - 2.0 * stretch));
        const auto hi = static_cast<int64_t>(std::ceil(center + 2.0 * stretch));
        double total = 0.0;
        for (int64_t j = lo; j <= hi; ++j) {
            const double w = cubic_kernel((j - center) / stretch);
            if (w == 0.0)
                continue;
            acc[i][reflect_index(j, in_size)] += w;
            total += w;
        }
        for (int64_t j = 0; j < in_size; ++j)
            acc[i][j] /= total;
    }
    return m.to(options);
}

VideoClip bicubic_resample(const VideoClip& clip, Scale scale) {
    check_clip(clip, "bicubic_resample");
    const int64_t h = clip.size(3);
    const int64_t w = clip.size(4);
    const auto opts = clip.options().requires_grad(false);
    auto mh = bicubic_matrix(h, scale, opts);
    auto mw = bicubic_matrix(w, scale, opts);
    return torch::matmul(torch::matmul(mh, clip), mw.t());
}

int gaussian_radius(double sigma) {
    if (!(sigma > 0.0))
        throw DomainError("gaussian blur: sigma must be positive");
    return std::max(1, static_cast<int>(std::floor(4.0 * sigma)));
}

torch::Tensor gaussian_matrix(int64_t size, double sigma, torch::TensorOptions options) {
    const int radius = gaussian_radius(sigma);
    std::vector<double> taps(2 * radius + 1);
    double total = 0.0;
    for (int d = -radius; d <= radius; ++d)
        total += taps[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
    auto m = torch::zeros({size, size}, torch::kFloat64);
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < size; ++i)
        for (int d = -radius; d <= radius; ++d)
            acc[i][reflect_index(i + d, size)] += taps[d + radius] / total;
    return m.to(options);
}

VideoClip gaussian_blur(const VideoClip& clip, double sigma) {
    check_clip(clip, "gaussian_blur");
    const auto opts = clip.options().requires_grad(false);
    auto mh = gaussian_matrix(clip.size(3), sigma, opts);
    auto mw = gaussian_matrix(clip.size(4), sigma, opts);
    return torch::matmul(torch::matmul(mh, clip), mw.t());
}

VideoClip pixel_unshuffle(const VideoClip& clip, int k) {
    check_clip(clip, "pixel_unshuffle");
    if (k < 1 || clip.size(3) % k != 0 || clip.size(4) % k != 0)
        throw DimensionError("pixel_unshuffle: spatial dims of " + shape_str(clip) +
                             " not divisible by " + std::to_string(k));
    return torch::pixel_unshuffle(clip, k);
}

VideoClip pixel_shuffle(const VideoClip& clip, int k) {
    check_clip(clip, "pixel_shuffle");
    if (k < 1 || clip.size(2) % (k * k) != 0)
        throw DimensionError("pixel_shuffle: channels of " + shape_str(clip) +
                             " not divisible by " + std::to_string(k * k));
    return torch::pixel_shuffle(clip, k);
}

VideoClip quantize_ste(const VideoClip& features) {
    auto clamped = features.clamp(0.0, 1.0);
    auto rounded = torch::round(clamped * 255.0) / 255.0;
    return clamped + (rounded - clamped).detach();
}

DenseBlockImpl::DenseBlockImpl(const DenseBlockOptions& options) : options_(options) {
    if (options_.residual() && options_.in_channels() != options_.out_channels())
        throw DimensionError("DenseBlock: residual path needs in == out channels");
    const int64_t g = options_.growth();
    for (int s = 0; s < 4; ++s) {
        const int64_t in = options_.in_channels() + s * g;
        const bool temporal_stage = options_.temporal() && s == 3;
        auto conv_opts = temporal_stage
                             ? torch::nn::Conv3dOptions(in, g, {3, 1, 1}).padding({1, 0, 0})
                             : torch::nn::Conv3dOptions(in, g, {1, 3, 3}).padding({0, 1, 1});
        stages_.push_back(register_module("conv" + std::to_string(s), torch::nn::Conv3d(conv_opts)));
    }
    auto fusion = torch::nn::Conv3d(
        torch::nn::Conv3dOptions(options_.in_channels() + 4 * g, options_.out_channels(), 1));
    if (options_.zero_init()) {
        torch::NoGradGuard guard;
        fusion->weight.zero_();
        fusion->bias.zero_();
    }
    stages_.push_back(register_module("fusion", fusion));
}

VideoClip DenseBlockImpl::forward(const VideoClip& x) {
    check_clip(x, "DenseBlock");
    if (x.size(2) != options_.in_channels())
        throw DimensionError("DenseBlock: expected " + std::to_string(options_.in_channels()) +
                             " channels, got " + shape_str(x));
    // Conv3d wants (B, C, T, H, W).
    std::vector<torch::Tensor> features{x.transpose(1, 2)};
    for (int s = 0; s < 4; ++s) {
        auto h = stages_[s]->forward(torch::cat(features, 1));
        features.push_back(torch::leaky_relu(h, options_.negative_slope()));
    }
    auto y = stages_[4]->forward(torch::cat(features, 1)).transpose(1, 2);
    return options_.residual() ? x + y : y;
}

CouplingBlockImpl::CouplingBlockImpl(const CouplingOptions& options) : options_(options) {
    auto sub = [&](int64_t in, int64_t out) {
        return DenseBlock(DenseBlockOptions(in, out)
                              .growth(options_.growth())
                              .temporal(options_.temporal())
                              .zero_init(options_.zero_init()));
    };
    f_ = register_module("F", sub(options_.split2(), options_.split1()));
    g_ = register_module("G", sub(options_.split1(), options_.split2()));
    h_ = register_module("H", sub(options_.split1(), options_.split2()));
}

void CouplingBlockImpl::check_channels(const VideoClip& x, std::string_view what) const {
    check_clip(x, what);
    if (x.size(2) != options_.split1() + options_.split2())
        throw DimensionError(std::string(what) + ": expected " +
                             std::to_string(options_.split1() + options_.split2()) +
                             " channels, got " + shape_str(x));
}

torch::Tensor CouplingBlockImpl::log_scale(const VideoClip& y1) {
    auto g = g_->forward(y1);
    const double c = options_.scale_clamp();
    return c > 0.0 ? c * (2.0 * torch::sigmoid(g) - 1.0) : g;
}

VideoClip CouplingBlockImpl::forward(const VideoClip& x) {
    check_channels(x, "CouplingBlock::forward");
    auto x1 = x.narrow(2, 0, options_.split1());
    auto x2 = x.narrow(2, options_.split1(), options_.split2());
    auto y1 = x1 + f_->forward(x2);
    auto y2 = x2 * torch::exp(log_scale(y1)) + h_->forward(y1);
    return torch::cat({y1, y2}, 2);
}

VideoClip CouplingBlockImpl::inverse(const VideoClip& y) {
    check_channels(y, "CouplingBlock::inverse");
    auto y1 = y.narrow(2, 0, options_.split1());
    auto y2 = y.narrow(2, options_.split1(), options_.split2());
    auto x2 = (y2 - h_->forward(y1)) * torch::exp(-log_scale(y1));
    auto x1 = y1 - f_->forward(x2);
    return torch::cat({x1, x2}, 2);
}

} // namespace selfc
