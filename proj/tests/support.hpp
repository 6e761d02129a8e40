#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace selfc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("selfc_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct GradCheck {
    double rel_error = 0.0; ///< |analytic - numeric| / max(|analytic|, |numeric|) over probed coordinates
    int probed = 0;
};

/// Compares autograd against central differences for a scalar function of
/// `inputs` (double tensors). Probes up to `per_input` random coordinates of
/// each input; the error is the norm of the difference over the norm of the
/// numeric gradient, across all probes.
inline GradCheck grad_check(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& fn,
                            std::vector<torch::Tensor> inputs, int per_input = 12, double h = 1e-6,
                            uint64_t seed = 0) {
    for (auto& t : inputs)
        t = t.detach().clone().set_requires_grad(true);
    auto out = fn(inputs);
    auto grads = torch::autograd::grad({out}, inputs, {}, false, false, true);

    std::mt19937_64 rng(seed);
    double diff2 = 0.0, ref2 = 0.0;
    GradCheck result;
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto flat = inputs[i].view(-1);
        const int64_t n = flat.numel();
        std::vector<int64_t> idx(n);
        for (int64_t j = 0; j < n; ++j)
            idx[j] = j;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min<int64_t>(n, per_input));
        auto analytic = grads[i].defined() ? grads[i].reshape(-1) : torch::zeros({n}, torch::kFloat64);
        for (auto j : idx) {
            const double orig = flat[j].item<double>();
            flat[j] = orig + h;
            const double up = fn(inputs).item<double>();
            flat[j] = orig - h;
            const double down = fn(inputs).item<double>();
            flat[j] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[j].item<double>();
            diff2 += (a - numeric) * (a - numeric);
            ref2 += numeric * numeric;
            ++result.probed;
        }
    }
    result.rel_error = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
    return result;
}

/// Standard normal CDF.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

} // namespace selfc::testing
