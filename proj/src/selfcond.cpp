#include "selfc/selfcond.hpp"

#include "selfc/errors.hpp"

#include <cmath>
#include <numbers>

namespace selfc {

GMMField GMMField::from_raw(const torch::Tensor& weight_logits, const torch::Tensor& means,
                            const torch::Tensor& raw_logvars) {
    return {torch::log_softmax(weight_logits, -1), means,
            raw_logvars.clamp(kLogvarMin, kLogvarMax)};
}

std::vector<int64_t> GMMField::location_shape() const {
    auto sizes = means.sizes().vec();
    sizes.pop_back();
    return sizes;
}

torch::Tensor GMMField::mean() const {
    return (weights() * means).sum(-1);
}

torch::Tensor gmm_log_density(const torch::Tensor& f, const GMMField& g) {
    if (f.sizes().vec() != g.location_shape())
        throw DimensionError("gmm_log_density: sample shape does not match the GMM field");
    const double half_log_pi = 0.5 * std::log(std::numbers::pi);
    auto diff = f.unsqueeze(-1) - g.means;
    auto component = -half_log_pi - 0.5 * g.logvars - diff.square() * torch::exp(-g.logvars);
    return torch::logsumexp(g.log_weights + component, -1);
}

torch::Tensor gmm_log_prob(const VideoClip& f_h, const GMMField& g) {
    return gmm_log_density(f_h, g).sum();
}

VideoClip gmm_sample_reparam(const GMMField& g, const torch::Tensor& noise,
                             const torch::Tensor& component_draw) {
    const auto shape = g.location_shape();
    if (noise.sizes().vec() != shape || component_draw.sizes().vec() != shape)
        throw DimensionError("gmm_sample_reparam: noise arrays must match the field's locations");
    torch::Tensor index;
    {
        torch::NoGradGuard guard;
        auto cdf = torch::cumsum(g.weights(), -1);
        index = (cdf <= component_draw.unsqueeze(-1).to(cdf.dtype()))
                    .sum(-1, /*keepdim=*/true)
                    .clamp_max(g.components() - 1)
                    .to(torch::kLong);
    }
    auto mu = g.means.gather(-1, index).squeeze(-1);
    auto logvar = g.logvars.gather(-1, index).squeeze(-1);
    return mu + torch::exp(0.5 * logvar) * std::sqrt(0.5) * noise;
}

STPNetImpl::STPNetImpl(const STPOptions& options) : options_(options) {
    namespace nn = torch::nn;
    const int64_t c = options_.width();
    stem_ = register_module("stem", nn::Conv3d(nn::Conv3dOptions(3, c, {1, 3, 3}).padding({0, 1, 1})));
    for (int s = 0; s < options_.stages(); ++s) {
        const auto idx = std::to_string(s);
        local_.push_back(register_module(
            "local" + idx, DenseBlock(DenseBlockOptions(c, c)
                                          .growth(options_.growth())
                                          .temporal(options_.temporal())
                                          .residual(true)
                                          .zero_init(false))));
        aggregators_.push_back(register_module(
            "aggregate" + idx,
            nn::Linear(c * options_.pool() * options_.pool(), options_.descriptor())));
        refiners_.push_back(register_module("refine" + idx, nn::Conv3d(nn::Conv3dOptions(c, c, 1))));
    }
    const int64_t h = options_.hidden();
    head1_ = register_module("head1", nn::Conv3d(nn::Conv3dOptions(c, h, 1)));
    head2_ = register_module("head2", nn::Conv3d(nn::Conv3dOptions(h, h, 1)));
    head3_ = register_module(
        "head3", nn::Conv3d(nn::Conv3dOptions(h, options_.hf_channels() * 3 * options_.components(), 1)));
    torch::NoGradGuard guard;
    head3_->weight.zero_();
    head3_->bias.zero_();
}

torch::Tensor STPNetImpl::attention_map(const torch::Tensor& features, int stage) {
    // features: (B, T, C, H, W)
    const int64_t b = features.size(0);
    const int64_t t = features.size(1);
    if (!options_.attention() || t == 1)
        return torch::eye(t, features.options()).expand({b, t, t});
    auto frames = features.flatten(0, 1);
    auto pooled = torch::adaptive_avg_pool2d(frames, {options_.pool(), options_.pool()});
    auto descriptor = aggregators_[stage]->forward(pooled.flatten(1)).view({b, t, -1});
    auto logits = torch::bmm(descriptor, descriptor.transpose(1, 2)) /
                  std::sqrt(static_cast<double>(options_.descriptor()));
    return torch::softmax(logits, -1);
}

GMMField STPNetImpl::forward(const VideoClip& low) {
    check_clip(low, "STPNet");
    if (low.size(2) != 3)
        throw DimensionError("STPNet: expected a 3-channel clip, got " + std::to_string(low.size(2)));
    const int64_t b = low.size(0), t = low.size(1), h = low.size(3), w = low.size(4);

    last_attention_.clear();
    auto features = stem_->forward(low.transpose(1, 2)).transpose(1, 2);
    for (int s = 0; s < options_.stages(); ++s) {
        features = local_[s]->forward(features);
        auto attention = attention_map(features, s);
        last_attention_.push_back(attention);
        auto attended = torch::einsum("bts,bschw->btchw", {attention, features});
        features = features + refiners_[s]->forward(attended.transpose(1, 2)).transpose(1, 2);
    }

    auto x = features.transpose(1, 2);
    x = torch::leaky_relu(head1_->forward(x), 0.2);
    x = torch::leaky_relu(head2_->forward(x), 0.2);
    x = head3_->forward(x).transpose(1, 2); // (B, T, C_hf*3*K, H, W)

    const int64_t kk = options_.components();
    auto params = x.reshape({b, t, options_.hf_channels(), 3, kk, h, w}).permute({3, 0, 1, 2, 5, 6, 4});
    return GMMField::from_raw(params[0], params[1], params[2]);
}

} // namespace selfc
