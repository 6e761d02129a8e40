#pragma once

#include "selfc/tensorblocks.hpp"

namespace selfc {

/// Dense grid of K-component Gaussian mixtures over the high-frequency lane.
/// Every array has shape (B, T, C_hf, H, W, K). Component densities follow
///   p(f | mu, s) = exp(-(f - mu)^2 / e^s) / sqrt(pi * e^s)
/// so each component has variance e^s / 2.
struct GMMField {
    torch::Tensor log_weights; ///< log-softmax over the last axis
    torch::Tensor means;
    torch::Tensor logvars;     ///< natural-log of the density's e^s term

    static constexpr double kLogvarMin = -10.0;
    static constexpr double kLogvarMax = 10.0;

    /// Normalizes logits over K and clamps log-variances.
    static GMMField from_raw(const torch::Tensor& weight_logits, const torch::Tensor& means,
                             const torch::Tensor& raw_logvars);

    torch::Tensor weights() const { return log_weights.exp(); }
    int64_t components() const { return means.size(-1); }
    /// Shape of the field without the component axis.
    std::vector<int64_t> location_shape() const;
    /// Per-location mixture mean.
    torch::Tensor mean() const;
};

/// Per-location log-density (same shape as `f`), log-sum-exp stabilized.
torch::Tensor gmm_log_density(const torch::Tensor& f, const GMMField& g);
/// Sum of log-densities over every location of `f_h`.
torch::Tensor gmm_log_prob(const VideoClip& f_h, const GMMField& g);

/// Reparameterized draw: the component is picked by inverse CDF of the
/// weights at `component_draw` (uniform in [0,1), no gradient), then
/// mu + sqrt(e^s / 2) * noise. Gradients reach mu and s of the picked component.
VideoClip gmm_sample_reparam(const GMMField& g, const torch::Tensor& noise,
                             const torch::Tensor& component_draw);

struct STPOptions {
    explicit STPOptions(int k) : k_(k) {}

    TORCH_ARG(int, k);
    TORCH_ARG(int64_t, components) = 5;
    TORCH_ARG(int64_t, width) = 32;
    TORCH_ARG(int64_t, growth) = 16;
    TORCH_ARG(int, stages) = 6;
    /// Output side of the spatial aggregator's average pool.
    TORCH_ARG(int64_t, pool) = 32;
    TORCH_ARG(int64_t, descriptor) = 256;
    TORCH_ARG(int64_t, hidden) = 64;
    TORCH_ARG(bool, temporal) = true;
    /// When off, every stage refines with the identity attention map.
    TORCH_ARG(bool, attention) = true;

public:
    int64_t hf_channels() const { return 3 * int64_t{k_} * k_; }
};

/// Spatial-temporal prior network: maps a 3-channel low-resolution clip to a
/// GMMField over the 3k^2 high-frequency channels at the same resolution.
class STPNetImpl : public torch::nn::Module {
public:
    explicit STPNetImpl(const STPOptions& options);

    GMMField forward(const VideoClip& low);

    const STPOptions& options() const { return options_; }
    /// Frame-to-frame attention of each stage from the latest forward, (B,T,T).
    const std::vector<torch::Tensor>& last_attention() const { return last_attention_; }
    std::vector<DenseBlock>& local_blocks() { return local_; }

private:
    torch::Tensor attention_map(const torch::Tensor& features, int stage);

    STPOptions options_;
    torch::nn::Conv3d stem_{nullptr};
    std::vector<DenseBlock> local_;
    std::vector<torch::nn::Linear> aggregators_;
    std::vector<torch::nn::Conv3d> refiners_;
    torch::nn::Conv3d head1_{nullptr};
    torch::nn::Conv3d head2_{nullptr};
    torch::nn::Conv3d head3_{nullptr};
    std::vector<torch::Tensor> last_attention_;
};
TORCH_MODULE(STPNet);

} // namespace selfc
