#pragma once

#include <torch/torch.h>

#include <string_view>

namespace selfc {

/// A video clip laid out as (batch, time, channel, height, width).
/// Pixel-space clips carry 3 channels with values in [0, 1]; feature-space
/// clips may have any channel count and range.
using VideoClip = torch::Tensor;

/// Throws DimensionError unless `clip` is a 5-D tensor with every axis >= 1.
void check_clip(const VideoClip& clip, std::string_view name);

/// Integer rescaling ratio: either k (upscale) or 1/k (downscale).
struct Scale {
    int factor = 2;
    bool down = true;

    static Scale downscale(int k) { return {k, true}; }
    static Scale upscale(int k) { return {k, false}; }
};

/// Keys cubic convolution kernel.
double cubic_kernel(double x, double a = -0.5);

/// Row-stochastic (out x in) matrix realizing 1-D bicubic resampling with
/// reflect boundaries. Downscaling stretches the kernel by k (antialiased).
torch::Tensor bicubic_matrix(int64_t in_size, Scale scale,
                             torch::TensorOptions options = torch::kFloat64);

/// Framewise separable bicubic resampling. Downscaling requires H and W to be
/// divisible by k.
VideoClip bicubic_resample(const VideoClip& clip, Scale scale);

/// Tap radius of the truncated Gaussian used across the project: floor(4*sigma)
/// (13 taps for sigma = 1.6).
int gaussian_radius(double sigma);

/// (n x n) matrix of a normalized, truncated 1-D Gaussian with reflect boundaries.
torch::Tensor gaussian_matrix(int64_t size, double sigma,
                              torch::TensorOptions options = torch::kFloat64);

/// Framewise separable Gaussian blur with reflect padding.
VideoClip gaussian_blur(const VideoClip& clip, double sigma);

/// (B,T,C,H,W) -> (B,T,C*k*k,H/k,W/k); output channel = c*k^2 + dy*k + dx.
VideoClip pixel_unshuffle(const VideoClip& clip, int k);
/// Exact inverse of pixel_unshuffle.
VideoClip pixel_shuffle(const VideoClip& clip, int k);

/// Clamp to [0,1] and round to the 255-level grid in the forward pass; the
/// backward pass lets the gradient through unchanged inside [0,1] and blocks
/// it outside.
VideoClip quantize_ste(const VideoClip& features);

struct DenseBlockOptions {
    DenseBlockOptions(int64_t in_channels, int64_t out_channels)
        : in_channels_(in_channels), out_channels_(out_channels) {}

    TORCH_ARG(int64_t, in_channels);
    TORCH_ARG(int64_t, out_channels);
    TORCH_ARG(int64_t, growth) = 16;
    TORCH_ARG(double, negative_slope) = 0.2;
    /// Dense2D-T when set: the last feature stage convolves over time (3x1x1).
    TORCH_ARG(bool, temporal) = true;
    /// Adds the input to the output (requires in == out).
    TORCH_ARG(bool, residual) = false;
    /// Zero the fusion layer so the block starts as its residual path.
    TORCH_ARG(bool, zero_init) = true;
};

/// Dense2D / Dense2D-T block: four densely connected 3-D convolutions of
/// width `growth` followed by a 1x1x1 fusion back to `out_channels`.
class DenseBlockImpl : public torch::nn::Module {
public:
    explicit DenseBlockImpl(const DenseBlockOptions& options);

    VideoClip forward(const VideoClip& x);

    const DenseBlockOptions& options() const { return options_; }
    /// The four feature convolutions followed by the fusion convolution.
    std::vector<torch::nn::Conv3d>& stages() { return stages_; }

private:
    DenseBlockOptions options_;
    std::vector<torch::nn::Conv3d> stages_;
};
TORCH_MODULE(DenseBlock);

struct CouplingOptions {
    CouplingOptions(int64_t split1, int64_t split2) : split1_(split1), split2_(split2) {}

    TORCH_ARG(int64_t, split1);
    TORCH_ARG(int64_t, split2);
    TORCH_ARG(int64_t, growth) = 16;
    TORCH_ARG(bool, temporal) = true;
    TORCH_ARG(bool, zero_init) = true;
    /// Bound c of the log-scale, s = c * (2 * sigmoid(G) - 1); 0 leaves G unbounded.
    TORCH_ARG(double, scale_clamp) = 1.0;
};

/// Affine coupling block built from three dense subnetworks:
///   y1 = x1 + F(x2)
///   y2 = x2 * exp(s(G(y1))) + H(y1)
/// with x1 the first `split1` channels and x2 the remaining `split2`.
class CouplingBlockImpl : public torch::nn::Module {
public:
    explicit CouplingBlockImpl(const CouplingOptions& options);

    VideoClip forward(const VideoClip& x);
    VideoClip inverse(const VideoClip& y);

    const CouplingOptions& options() const { return options_; }
    DenseBlock& additive_lf() { return f_; }
    DenseBlock& scale_hf() { return g_; }
    DenseBlock& shift_hf() { return h_; }

private:
    void check_channels(const VideoClip& x, std::string_view what) const;
    torch::Tensor log_scale(const VideoClip& y1);

    CouplingOptions options_;
    DenseBlock f_{nullptr};
    DenseBlock g_{nullptr};
    DenseBlock h_{nullptr};
};
TORCH_MODULE(CouplingBlock);

} // namespace selfc
