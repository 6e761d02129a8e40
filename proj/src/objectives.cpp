#include "selfc/objectives.hpp"

#include "selfc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace selfc {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes())
        throw DimensionError(std::string(what) + ": operand shapes differ");
}

} // namespace

LossWeights LossWeights::rescaling(int k) {
    LossWeights w;
    w.k = k;
    return w;
}

LossWeights LossWeights::compression(int k) {
    LossWeights w = rescaling(k);
    w.recons = 0.1;
    return w;
}

torch::Tensor loss_conditional(const VideoClip& f_h, const GMMField& g) {
    check_clip(f_h, "loss_conditional");
    return -gmm_log_prob(f_h, g) / static_cast<double>(f_h.size(0));
}

torch::Tensor loss_mimic(const VideoClip& f_l, const VideoClip& x, int k) {
    auto reference = bicubic_resample(x, Scale::downscale(k));
    require_same_shape(reference, f_l, "loss_mimic");
    return (reference - f_l).square().mean();
}

torch::Tensor loss_penalize(const VideoClip& x, const FrequencyDecomposition& f,
                            FrequencyTransform& transform) {
    auto reconstruction = synthesize(f, transform);
    require_same_shape(x, reconstruction, "loss_penalize");
    return (x - reconstruction).square().mean();
}

torch::Tensor loss_recons(const VideoClip& x, const VideoClip& x_hat) {
    require_same_shape(x, x_hat, "loss_recons");
    return (x - x_hat).abs().mean();
}

torch::Tensor loss_total_selfc(const SelfcLossParts& parts, const LossWeights& w) {
    const double k2 = static_cast<double>(w.k) * w.k;
    return w.conditional * parts.conditional + w.mimic * k2 * parts.mimic +
           w.penalize * parts.penalize + w.recons * parts.recons;
}

double conditional_weight_at(double base, int64_t iter, int64_t total, double decay_fraction) {
    const int64_t last = total - 1;
    if (iter >= last)
        return 0.0;
    const auto start = static_cast<int64_t>(std::floor(static_cast<double>(total) * (1.0 - decay_fraction)));
    if (iter < start)
        return base;
    if (start >= last)
        return 0.0;
    return base * static_cast<double>(last - iter) / static_cast<double>(last - start);
}

torch::Tensor pearson_rho(const torch::Tensor& a, const torch::Tensor& b, double eps) {
    require_same_shape(a, b, "pearson_rho");
    if (a.dim() < 1 || a.size(0) < 2)
        throw InsufficientSampleError("pearson_rho: need at least 2 samples along the batch axis");
    auto da = a - a.mean(0, true);
    auto db = b - b.mean(0, true);
    auto cov = (da * db).sum(0);
    // clamp_min keeps sqrt differentiable on constant locations.
    auto sa = da.square().sum(0).clamp_min(1e-30).sqrt() + eps;
    auto sb = db.square().sum(0).clamp_min(1e-30).sqrt() + eps;
    return (cov / (sa * sb)).mean();
}

torch::Tensor loss_codec(const VideoClip& eta_out, const VideoClip& phi_out, const torch::Tensor& rho,
                         double lambda_rho) {
    require_same_shape(eta_out, phi_out, "loss_codec");
    return (eta_out - phi_out).square().mean() - lambda_rho * rho;
}

torch::Tensor loss_codec(const VideoClip& eta_out, const VideoClip& phi_out, double lambda_rho) {
    return loss_codec(eta_out, phi_out, pearson_rho(eta_out, phi_out), lambda_rho);
}

torch::Tensor loss_total_compression(const torch::Tensor& selfc_total, const torch::Tensor& codec_loss,
                                     double lambda_codec) {
    return selfc_total + lambda_codec * codec_loss;
}

} // namespace selfc
