#pragma once

#include "selfc/frequency.hpp"
#include "selfc/selfcond.hpp"

namespace selfc {

struct LossWeights {
    double conditional = 0.01; ///< lambda_1
    double mimic = 1.0;        ///< lambda_2 (scaled by k^2 in the total)
    double penalize = 1.0;     ///< lambda_3
    double recons = 1.0;       ///< lambda_4
    double rho = 1e-5;         ///< weight of the correlation term in the codec loss
    double codec = 4.0;        ///< lambda_codec
    int k = 2;

    static LossWeights rescaling(int k);
    /// Rescaling weights with lambda_4 = 0.1.
    static LossWeights compression(int k);
};

/// Negative log-likelihood of f_h under the field, averaged over the batch.
torch::Tensor loss_conditional(const VideoClip& f_h, const GMMField& g);
/// Mean-square distance between f_l and the bicubic downscale of x.
torch::Tensor loss_mimic(const VideoClip& f_l, const VideoClip& x, int k);
/// Mean-square distance between x and the synthesizer's reconstruction of the full feature.
torch::Tensor loss_penalize(const VideoClip& x, const FrequencyDecomposition& f,
                            FrequencyTransform& transform);
/// Mean absolute error.
torch::Tensor loss_recons(const VideoClip& x, const VideoClip& x_hat);

struct SelfcLossParts {
    torch::Tensor conditional;
    torch::Tensor mimic;
    torch::Tensor penalize;
    torch::Tensor recons;
};

torch::Tensor loss_total_selfc(const SelfcLossParts& parts, const LossWeights& w);

/// lambda_1 at `iter` (0-based) of a `total`-iteration run: constant, then a
/// linear decay over the final `decay_fraction` of the run reaching exactly 0
/// at the last iteration.
double conditional_weight_at(double base, int64_t iter, int64_t total, double decay_fraction = 0.5);

/// Pearson correlation along axis 0 (the batch), computed independently at
/// every remaining location and averaged. Zero-variance locations yield 0.
torch::Tensor pearson_rho(const torch::Tensor& a, const torch::Tensor& b, double eps = 1e-8);

/// Mean-square difference minus lambda_rho * rho.
torch::Tensor loss_codec(const VideoClip& eta_out, const VideoClip& phi_out,
                         const torch::Tensor& rho, double lambda_rho);
torch::Tensor loss_codec(const VideoClip& eta_out, const VideoClip& phi_out, double lambda_rho);

torch::Tensor loss_total_compression(const torch::Tensor& selfc_total, const torch::Tensor& codec_loss,
                                     double lambda_codec);

} // namespace selfc
