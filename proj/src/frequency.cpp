#include "selfc/frequency.hpp"

#include "selfc/errors.hpp"

namespace selfc {

VideoClip FrequencyDecomposition::joined() const {
    return torch::cat({low, high}, 2);
}

FrequencyDecomposition FrequencyDecomposition::split(const VideoClip& features, int k) {
    check_clip(features, "FrequencyDecomposition::split");
    if (features.size(2) != 3 * (1 + k * k))
        throw DimensionError("FrequencyDecomposition: expected " + std::to_string(3 * (1 + k * k)) +
                             " channels, got " + std::to_string(features.size(2)));
    return {features.narrow(2, 0, 3), features.narrow(2, 3, 3 * k * k), k};
}

FrequencyDecomposition decompose_fixed(const VideoClip& x, int k) {
    check_clip(x, "decompose_fixed");
    auto low = bicubic_resample(x, Scale::downscale(k));
    auto high = pixel_unshuffle(x - bicubic_resample(low, Scale::upscale(k)), k);
    return {low, high, k};
}

VideoClip compose_fixed(const VideoClip& low, const VideoClip& high, int k) {
    check_clip(low, "compose_fixed(low)");
    check_clip(high, "compose_fixed(high)");
    if (high.size(2) != low.size(2) * k * k || low.size(0) != high.size(0) ||
        low.size(1) != high.size(1) || low.size(3) != high.size(3) || low.size(4) != high.size(4))
        throw DimensionError("compose_fixed: low/high shapes do not form one decomposition");
    return bicubic_resample(low, Scale::upscale(k)) + pixel_shuffle(high, k);
}

FrequencyTransformImpl::FrequencyTransformImpl(const TransformOptions& options) : options_(options) {
    if (options_.k() < 2)
        throw ConfigError("FrequencyTransform: k must be >= 2");
    const int64_t hf = 3 * int64_t{options_.k()} * options_.k();
    for (int i = 0; i < options_.blocks(); ++i) {
        const auto idx = std::to_string(i);
        if (options_.kind() == TransformKind::Invertible) {
            couplings_.push_back(register_module(
                "coupling" + idx, CouplingBlock(CouplingOptions(3, hf)
                                                    .growth(options_.growth())
                                                    .temporal(options_.temporal())
                                                    .zero_init(options_.zero_init())
                                                    .scale_clamp(options_.scale_clamp()))));
        } else {
            auto block = [&] {
                return DenseBlock(DenseBlockOptions(options_.channels(), options_.channels())
                                      .growth(options_.growth())
                                      .temporal(options_.temporal())
                                      .residual(true)
                                      .zero_init(options_.zero_init()));
            };
            analysis_.push_back(register_module("analysis" + idx, block()));
            synthesis_.push_back(register_module("synthesis" + idx, block()));
        }
    }
}

VideoClip FrequencyTransformImpl::forward(const VideoClip& features) {
    VideoClip out = features;
    for (auto& c : couplings_)
        out = c->forward(out);
    for (auto& b : analysis_)
        out = b->forward(out);
    return out;
}

VideoClip FrequencyTransformImpl::inverse(const VideoClip& features) {
    VideoClip out = features;
    for (auto it = couplings_.rbegin(); it != couplings_.rend(); ++it)
        out = (*it)->inverse(out);
    for (auto& b : synthesis_)
        out = b->forward(out);
    return out;
}

FrequencyDecomposition analyze(const VideoClip& x, FrequencyTransform& transform) {
    const int k = transform->options().k();
    auto fixed = decompose_fixed(x, k);
    return FrequencyDecomposition::split(transform->forward(fixed.joined()), k);
}

VideoClip synthesize(const FrequencyDecomposition& f, FrequencyTransform& transform) {
    const int k = transform->options().k();
    if (f.k != k)
        throw DimensionError("synthesize: decomposition ratio does not match the transform");
    check_clip(f.low, "synthesize(low)");
    check_clip(f.high, "synthesize(high)");
    if (f.low.size(2) != 3 || f.high.size(2) != 3 * k * k)
        throw DimensionError("synthesize: expected 3 + 3k^2 channels");
    auto fixed = FrequencyDecomposition::split(transform->inverse(f.joined()), k);
    return compose_fixed(fixed.low, fixed.high, k);
}

} // namespace selfc
