#pragma once

#include "selfc/codec.hpp"
#include "selfc/tensorblocks.hpp"

#include <filesystem>
#include <vector>

namespace selfc {

enum class MetricChannel { Rgb, Y };

/// BT.601 full-range luminance, (B,T,3,H,W) -> (B,T,1,H,W).
VideoClip to_luma(const VideoClip& clip);

constexpr double kPsnrCap = 99.0;

/// 10*log10(1/MSE) over the whole clip, capped at 99 dB.
double psnr(const VideoClip& a, const VideoClip& b, MetricChannel channel = MetricChannel::Rgb);

/// Gaussian-window SSIM (K1 = 0.01, K2 = 0.03, 11 taps, sigma 1.5, valid
/// filtering; the window shrinks to the frame when frames are smaller),
/// averaged over channels and frames.
double ssim(const VideoClip& a, const VideoClip& b, MetricChannel channel = MetricChannel::Rgb);

/// Five-scale MS-SSIM with weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333),
/// 2x2 average pooling between scales; per channel, then averaged.
double ms_ssim(const VideoClip& a, const VideoClip& b);

/// Bits per pixel of the original (pre-downscale) frame area.
double bpp(const BitstreamReport& report);
double bpp(int64_t encoded_bytes, int64_t frames, int64_t original_width, int64_t original_height);

struct RDPoint {
    double bpp = 0.0;
    double quality = 0.0;
};

struct RDCurve {
    std::vector<RDPoint> points;

    /// Throws DomainError unless bpp is positive and strictly increasing.
    void validate(std::size_t min_points = 1) const;
    /// Sorts by bpp.
    void sort();
};

/// Bjontegaard delta bit-rate of `test` against `anchor` in percent: a cubic
/// fit of ln(rate) over quality per curve, integrated over the shared
/// quality interval. Negative means `test` needs fewer bits.
double bdbr(const RDCurve& test, const RDCurve& anchor);

/// `<bpp>\t<quality>` per line.
void write_rd_curve(const std::filesystem::path& path, const RDCurve& curve);
RDCurve read_rd_curve(const std::filesystem::path& path);

} // namespace selfc
