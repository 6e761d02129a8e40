#include "selfc/metrics.hpp"

#include "selfc/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace selfc {

namespace {

void require_comparable(const VideoClip& a, const VideoClip& b, const char* what) {
    check_clip(a, what);
    if (a.sizes() != b.sizes())
        throw DimensionError(std::string(what) + ": clips differ in shape");
    if (a.size(2) != 3)
        throw DimensionError(std::string(what) + ": expected 3-channel clips");
}

/// (B,T,C,H,W) -> (B*T*C, 1, H, W) planes in double precision.
torch::Tensor planes(const VideoClip& clip) {
    return clip.detach().to(torch::kFloat64).flatten(0, 2).unsqueeze(1);
}

torch::Tensor gaussian_window(int64_t size, double sigma) {
    auto x = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
    auto g = torch::exp(-x.square() / (2.0 * sigma * sigma));
    g = g / g.sum();
    return torch::outer(g, g).view({1, 1, size, size});
}

struct SsimTerms {
    torch::Tensor ssim; // per plane
    torch::Tensor cs;   // per plane
};

SsimTerms ssim_terms(const torch::Tensor& x, const torch::Tensor& y) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int64_t size = std::min<int64_t>({11, x.size(2), x.size(3)});
    auto win = gaussian_window(size, 1.5);
    auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, win); };
    auto mx = filt(x), my = filt(y);
    auto sxx = filt(x * x) - mx * mx;
    auto syy = filt(y * y) - my * my;
    auto sxy = filt(x * y) - mx * my;
    auto cs = (2.0 * sxy + c2) / (sxx + syy + c2);
    auto lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    return {(lum * cs).mean({1, 2, 3}), cs.mean({1, 2, 3})};
}

} // namespace

VideoClip to_luma(const VideoClip& clip) {
    return 0.299 * clip.narrow(2, 0, 1) + 0.587 * clip.narrow(2, 1, 1) + 0.114 * clip.narrow(2, 2, 1);
}

double psnr(const VideoClip& a, const VideoClip& b, MetricChannel channel) {
    require_comparable(a, b, "psnr");
    auto x = a.detach().to(torch::kFloat64), y = b.detach().to(torch::kFloat64);
    if (channel == MetricChannel::Y) {
        x = to_luma(x);
        y = to_luma(y);
    }
    const double mse = (x - y).square().mean().item<double>();
    if (mse <= 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const VideoClip& a, const VideoClip& b, MetricChannel channel) {
    require_comparable(a, b, "ssim");
    auto x = channel == MetricChannel::Y ? to_luma(a.detach()) : a;
    auto y = channel == MetricChannel::Y ? to_luma(b.detach()) : b;
    return ssim_terms(planes(x), planes(y)).ssim.mean().item<double>();
}

double ms_ssim(const VideoClip& a, const VideoClip& b) {
    require_comparable(a, b, "ms_ssim");
    static constexpr std::array<double, 5> kWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    auto x = planes(a), y = planes(b);
    auto result = torch::ones({x.size(0)}, torch::kFloat64);
    for (std::size_t s = 0; s < kWeights.size(); ++s) {
        if (x.size(2) < 1 || x.size(3) < 1)
            throw DomainError("ms_ssim: frames too small for five scales");
        auto terms = ssim_terms(x, y);
        const bool last = s + 1 == kWeights.size();
        auto factor = (last ? terms.ssim : terms.cs).clamp_min(0.0);
        result = result * factor.pow(kWeights[s]);
        if (!last) {
            if (x.size(2) < 2 || x.size(3) < 2)
                throw DomainError("ms_ssim: frames too small for five scales");
            x = torch::avg_pool2d(x, 2);
            y = torch::avg_pool2d(y, 2);
        }
    }
    return result.mean().item<double>();
}

double bpp(int64_t encoded_bytes, int64_t frames, int64_t original_width, int64_t original_height) {
    if (frames <= 0 || original_width <= 0 || original_height <= 0)
        throw DomainError("bpp: frame count and dimensions must be positive");
    return static_cast<double>(encoded_bytes) * 8.0 /
           (static_cast<double>(frames) * static_cast<double>(original_width) * static_cast<double>(original_height));
}

double bpp(const BitstreamReport& report) {
    return bpp(report.encoded_bytes, report.frame_count, report.width, report.height);
}

void RDCurve::validate(std::size_t min_points) const {
    if (points.size() < min_points)
        throw DomainError("RD curve needs at least " + std::to_string(min_points) + " points, has " +
                          std::to_string(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].bpp > 0.0) || !std::isfinite(points[i].quality))
            throw DomainError("RD curve: bpp must be positive and quality finite");
        if (i > 0 && !(points[i].bpp > points[i - 1].bpp))
            throw DomainError("RD curve: bpp must be strictly increasing");
    }
}

void RDCurve::sort() {
    std::sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
}

namespace {

/// Least-squares cubic ln(rate) = p(u) with u = (quality - center) / scale.
struct CubicFit {
    Eigen::Vector4d coeffs;
    double center = 0.0;
    double scale = 1.0;

    /// Integral of p over [lo, hi] in quality units.
    double integral(double lo, double hi) const {
        auto antiderivative = [&](double q) {
            const double u = (q - center) / scale;
            double acc = 0.0;
            double power = u;
            for (int i = 0; i < 4; ++i) {
                acc += coeffs[i] * power / (i + 1);
                power *= u;
            }
            return acc * scale;
        };
        return antiderivative(hi) - antiderivative(lo);
    }
};

CubicFit fit_log_rate(const RDCurve& curve) {
    const auto n = static_cast<Eigen::Index>(curve.points.size());
    double lo = curve.points.front().quality, hi = lo;
    for (const auto& p : curve.points) {
        lo = std::min(lo, p.quality);
        hi = std::max(hi, p.quality);
    }
    CubicFit fit;
    fit.center = 0.5 * (lo + hi);
    fit.scale = hi > lo ? 0.5 * (hi - lo) : 1.0;
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = (curve.points[i].quality - fit.center) / fit.scale;
        a(i, 0) = 1.0;
        a(i, 1) = u;
        a(i, 2) = u * u;
        a(i, 3) = u * u * u;
        b(i) = std::log(curve.points[i].bpp);
    }
    fit.coeffs = a.colPivHouseholderQr().solve(b);
    return fit;
}

std::pair<double, double> quality_range(const RDCurve& c) {
    auto [lo, hi] = std::minmax_element(c.points.begin(), c.points.end(),
                                        [](const RDPoint& a, const RDPoint& b) { return a.quality < b.quality; });
    return {lo->quality, hi->quality};
}

} // namespace

double bdbr(const RDCurve& test, const RDCurve& anchor) {
    test.validate(4);
    anchor.validate(4);
    const auto [tlo, thi] = quality_range(test);
    const auto [alo, ahi] = quality_range(anchor);
    const double lo = std::max(tlo, alo);
    const double hi = std::min(thi, ahi);
    if (!(hi > lo))
        throw DomainError("bdbr: the curves share no quality interval");
    const double avg_diff =
        (fit_log_rate(test).integral(lo, hi) - fit_log_rate(anchor).integral(lo, hi)) / (hi - lo);
    return (std::exp(avg_diff) - 1.0) * 100.0;
}

void write_rd_curve(const std::filesystem::path& path, const RDCurve& curve) {
    std::ofstream out(path);
    char line[96];
    for (const auto& p : curve.points) {
        std::snprintf(line, sizeof(line), "%.10g\t%.10g\n", p.bpp, p.quality);
        out << line;
    }
    if (!out)
        throw IngestionError("cannot write RD curve " + path.string());
}

RDCurve read_rd_curve(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IngestionError("cannot open RD curve " + path.string());
    RDCurve curve;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ss(line);
        RDPoint p;
        if (!(ss >> p.bpp >> p.quality))
            throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": expected '<bpp>\\t<quality>'");
        curve.points.push_back(p);
    }
    return curve;
}

} // namespace selfc
