#pragma once

#include "selfc/tensorblocks.hpp"

namespace selfc {

/// Low-frequency lane (3 channels) and high-frequency lane (3*k^2 channels),
/// both at 1/k spatial resolution.
struct FrequencyDecomposition {
    VideoClip low;
    VideoClip high;
    int k = 2;

    /// Channel concatenation low (c) high.
    VideoClip joined() const;
    static FrequencyDecomposition split(const VideoClip& features, int k);
};

/// c_l = Down(x), c_h = PixelUnshuffle(x - Up(c_l)).
FrequencyDecomposition decompose_fixed(const VideoClip& x, int k);
/// Up(c_l) + PixelShuffle(c_h); exact inverse of decompose_fixed.
VideoClip compose_fixed(const VideoClip& low, const VideoClip& high, int k);

enum class TransformKind { Invertible, Plain };

struct TransformOptions {
    explicit TransformOptions(int k) : k_(k) {}

    TORCH_ARG(int, k);
    TORCH_ARG(TransformKind, kind) = TransformKind::Invertible;
    /// 2 for the small model, 8 for the large one.
    TORCH_ARG(int, blocks) = 2;
    TORCH_ARG(int64_t, growth) = 16;
    TORCH_ARG(bool, temporal) = true;
    TORCH_ARG(bool, zero_init) = true;
    /// Log-scale bound of the coupling blocks (see CouplingOptions).
    TORCH_ARG(double, scale_clamp) = 1.0;

public:
    int64_t channels() const { return 3 * (1 + int64_t{k_} * k_); }
};

/// The learnable transform T wrapped around the fixed decomposition.
/// Invertible transforms are stacks of coupling blocks with the LF lane as
/// the first split; plain transforms are residual Dense2D(-T) stacks with an
/// independent mirrored stack for synthesis.
class FrequencyTransformImpl : public torch::nn::Module {
public:
    explicit FrequencyTransformImpl(const TransformOptions& options);

    VideoClip forward(const VideoClip& features);
    VideoClip inverse(const VideoClip& features);

    const TransformOptions& options() const { return options_; }
    std::vector<CouplingBlock>& couplings() { return couplings_; }

private:
    TransformOptions options_;
    std::vector<CouplingBlock> couplings_;
    std::vector<DenseBlock> analysis_;
    std::vector<DenseBlock> synthesis_;
};
TORCH_MODULE(FrequencyTransform);

/// Frequency analyzer: f = T(c_l (c) c_h), split into f_l and f_h.
FrequencyDecomposition analyze(const VideoClip& x, FrequencyTransform& transform);
/// Frequency synthesizer: inverse transform, then compose_fixed.
VideoClip synthesize(const FrequencyDecomposition& f, FrequencyTransform& transform);

} // namespace selfc
