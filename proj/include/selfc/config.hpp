#pragma once

#include "selfc/codec.hpp"
#include "selfc/frequency.hpp"
#include "selfc/objectives.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace selfc {

/// Flat `key = value` configuration. Blank lines and lines starting with '#'
/// are ignored; later assignments win.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    /// Applies one `key=value` override.
    void set_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::optional<std::string> get(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

enum class Task { Rescale, Compress };
enum class HfMode { Sample, Mean, Zero };

struct TrainConfig {
    Task task = Task::Rescale;
    int k = 4;

    // Frequency transform.
    TransformKind transform = TransformKind::Invertible;
    int blocks = 2;
    int64_t growth = 16;
    bool temporal = true;
    double coupling_clamp = 1.0;

    // Spatial-temporal prior.
    int64_t components = 5;
    int64_t stp_width = 32;
    int stp_stages = 6;
    int64_t stp_pool = 32;
    int64_t stp_descriptor = 256;
    int64_t stp_hidden = 64;
    bool stp_attention = true;

    // Optimization.
    int64_t batch_size = 8;
    double lr = 1e-4;
    int64_t total_iters = 2000;
    /// 0 means a quarter of total_iters.
    int64_t lr_halving_period = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    uint64_t seed = 0;
    int64_t clip_length = 7;
    int64_t patch = 64;
    bool augment = true;
    LossWeights weights = LossWeights::rescaling(4);
    double conditional_decay_fraction = 0.5;

    // Compression.
    CodecConfig codec{CodecKind::Mock};
    std::vector<int> train_qualities{CodecConfig::kTrainingQualities.begin(), CodecConfig::kTrainingQualities.end()};
    int surrogate_blocks = 6;

    // Data and evaluation.
    std::string corpus;
    std::string train_split = "train";
    std::string eval_split = "";
    int eval_draws = 5;
    HfMode hf_mode = HfMode::Sample;
    std::vector<int> eval_qualities{21, 25, 29, 33, 37};

    std::string checkpoint;
    int threads = 1;
    bool double_precision = false;
    int64_t checkpoint_every = 0;

    /// Task-dependent defaults overlaid with every key in `kv`. Unknown keys
    /// and malformed values raise ConfigError.
    static TrainConfig from(const KeyValueConfig& kv);
    /// Full snapshot in `key = value` form; from(parse(to_text())) round-trips.
    std::string to_text() const;
    void validate() const;

    int64_t halving_period() const { return lr_halving_period > 0 ? lr_halving_period : std::max<int64_t>(1, total_iters / 4); }
    torch::Dtype dtype() const { return double_precision ? torch::kFloat64 : torch::kFloat32; }
};

} // namespace selfc
