#pragma once

#include "selfc/checkpoint.hpp"
#include "selfc/codec.hpp"
#include "selfc/config.hpp"
#include "selfc/data.hpp"
#include "selfc/frequency.hpp"
#include "selfc/metrics.hpp"
#include "selfc/objectives.hpp"
#include "selfc/selfcond.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace selfc {

/// Transform T, STP-Net and (for compression) the surrogate perturbator.
class SelfCModelImpl : public torch::nn::Module {
public:
    explicit SelfCModelImpl(const TrainConfig& cfg);

    FrequencyTransform transform{nullptr};
    STPNet prior{nullptr};
    SurrogateNet surrogate{nullptr}; ///< empty for the rescaling task

    std::vector<torch::Tensor> main_parameters();
    std::vector<torch::Tensor> surrogate_parameters();
    int k() const { return transform->options().k(); }
};
TORCH_MODULE(SelfCModel);

/// 64-bit mix of a seed with stream coordinates; every random draw of the
/// pipeline is keyed this way so steps replay independently of history.
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

// ---------------------------------------------------------------------------
// Inference.

/// Analyze, then hard-quantize the low-frequency lane to 8 bits.
VideoClip downscale(SelfCModel& model, const VideoClip& x);

struct UpscaleOptions {
    HfMode hf_mode = HfMode::Sample;
    uint64_t seed = 0;
};

/// STP-Net on the quantized low-resolution clip, one high-frequency draw,
/// synthesis, clamp to [0,1]. Not rounded.
VideoClip upscale(SelfCModel& model, const VideoClip& x_l, const UpscaleOptions& options);

/// 8-bit bicubic down then bicubic up.
VideoClip bicubic_roundtrip(const VideoClip& x, int k);

/// Rounds to the 255-level grid after clamping.
VideoClip to_8bit(const VideoClip& x);

// ---------------------------------------------------------------------------
// Training.

struct StepLosses {
    int64_t iteration = 0;
    double conditional = 0.0;
    double mimic = 0.0;
    double penalize = 0.0;
    double recons = 0.0;
    double codec = 0.0;   ///< compression only
    double total = 0.0;
    double lambda_c = 0.0;
    int quality = -1;     ///< codec quality drawn for the step (compression only)

    /// `iter\tL_c\tL_mimic\tL_pen\tL_recons\ttotal`
    std::string log_line() const;
    static constexpr const char* kLogHeader = "iter\tL_c\tL_mimic\tL_pen\tL_recons\ttotal";
};

/// Training clips kept as 8-bit tensors, loaded on first use.
class ClipSource {
public:
    explicit ClipSource(std::vector<ClipRecord> records);
    explicit ClipSource(const std::vector<VideoClip>& clips);

    std::size_t size() const { return entries_.size(); }
    /// (T,3,H,W) uint8.
    const torch::Tensor& frames(std::size_t index);

private:
    struct Entry {
        std::optional<ClipRecord> record;
        torch::Tensor frames;
    };
    std::vector<Entry> entries_;
};

class Trainer {
public:
    /// Loads the `train_split` clips of `cfg.corpus`.
    explicit Trainer(TrainConfig cfg);
    Trainer(TrainConfig cfg, ClipSource clips);

    /// One optimizer update on the batch drawn for the current iteration.
    StepLosses step();
    /// One optimizer update on an explicit (B,T,3,H,W) batch. The codec
    /// quality and sampling noise still derive from (seed, iteration).
    StepLosses step_on(const VideoClip& batch);
    /// The batch that step() would use at `iteration`.
    VideoClip sample_batch(int64_t iteration);

    /// Runs until total_iters, appending to `<out>/loss.log` and writing
    /// `<out>/checkpoint` at the end (plus `<out>/checkpoint_<iter>` every
    /// checkpoint_every steps).
    void run(const std::filesystem::path& out, std::ostream* progress = nullptr);

    Checkpoint checkpoint() const;
    /// Restores parameters, optimizer moments and the iteration counter.
    void restore(const Checkpoint& ckpt);
    void save(const std::filesystem::path& dir) const { save_checkpoint(checkpoint(), dir); }

    int64_t iteration() const { return iteration_; }
    double learning_rate() const;
    const TrainConfig& config() const { return cfg_; }
    SelfCModel& model() { return model_; }
    torch::optim::Adam& optimizer() { return *optimizer_; }

private:
    StepLosses forward_backward(const VideoClip& batch);

    TrainConfig cfg_;
    SelfCModel model_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    std::optional<ClipSource> clips_;
    int64_t iteration_ = 0;
};

/// Rebuilds the model recorded in a checkpoint; `overrides` apply on top of
/// its config snapshot.
SelfCModel load_model(const std::filesystem::path& dir, const KeyValueConfig& overrides = {},
                      TrainConfig* config_out = nullptr);

// ---------------------------------------------------------------------------
// Evaluation.

struct NamedClip {
    std::string id;
    VideoClip clip; ///< (1,T,3,H,W)
};

/// Loads the clips of `split` (all when empty) with every frame.
std::vector<NamedClip> load_named_clips(const std::filesystem::path& manifest, const std::string& split,
                                        torch::Dtype dtype = torch::kFloat32);

struct ClipMetrics {
    std::string id;
    double psnr_y = 0.0;
    double psnr_rgb = 0.0;
    double ssim_y = 0.0;
    double ssim_rgb = 0.0;
};

struct MetricsTable {
    std::vector<ClipMetrics> rows;
    ClipMetrics average;
};

struct RescaleEvalOptions {
    int draws = 5;
    HfMode hf_mode = HfMode::Sample;
    uint64_t seed = 0;
};

/// Metrics of downscale -> quantize -> upscale, averaged over `draws`
/// independent draws per clip and then over clips. Frames are cropped to a
/// multiple of k.
MetricsTable evaluate_rescale(SelfCModel& model, const std::vector<NamedClip>& clips,
                              const RescaleEvalOptions& options = {});
/// Same table for the bicubic-down / bicubic-up pipeline.
MetricsTable evaluate_bicubic(const std::vector<NamedClip>& clips, int k);

/// Tab-separated: `clip\tpsnr_y\tpsnr_rgb\tssim_y\tssim_rgb`, one row per
/// clip followed by an `average` row.
void write_metrics_table(std::ostream& out, const MetricsTable& table);

struct CompressEvalResult {
    RDCurve system_psnr, system_msssim;
    RDCurve anchor_psnr, anchor_msssim;
    RDCurve bicubic_psnr, bicubic_msssim;
    /// System against anchor; absent with fewer than four qualities.
    std::optional<double> bdbr_psnr, bdbr_msssim;
};

/// Sweeps `qualities`. System: learned downscale, codec, learned upscale.
/// Anchor: the codec on the full-resolution clip. Bicubic: bicubic down,
/// codec, bicubic up. Rates are bpp of the full-resolution frame area.
CompressEvalResult evaluate_compress(SelfCModel& model, const std::vector<NamedClip>& clips,
                                     const CodecConfig& codec, const std::vector<int>& qualities,
                                     const RescaleEvalOptions& options = {});

} // namespace selfc
