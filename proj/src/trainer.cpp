#include "selfc/trainer.hpp"

#include "selfc/errors.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace selfc {

namespace fs = std::filesystem;

SelfCModelImpl::SelfCModelImpl(const TrainConfig& cfg) {
    transform = register_module("transform", FrequencyTransform(TransformOptions(cfg.k)
                                                                     .kind(cfg.transform)
                                                                     .blocks(cfg.blocks)
                                                                     .growth(cfg.growth)
                                                                     .temporal(cfg.temporal)
                                                                     .scale_clamp(cfg.coupling_clamp)));
    prior = register_module("prior", STPNet(STPOptions(cfg.k)
                                                .components(cfg.components)
                                                .width(cfg.stp_width)
                                                .growth(cfg.growth)
                                                .stages(cfg.stp_stages)
                                                .pool(cfg.stp_pool)
                                                .descriptor(cfg.stp_descriptor)
                                                .hidden(cfg.stp_hidden)
                                                .temporal(cfg.temporal)
                                                .attention(cfg.stp_attention)));
    if (cfg.task == Task::Compress)
        surrogate = register_module(
            "surrogate",
            SurrogateNet(SurrogateOptions().blocks(cfg.surrogate_blocks).growth(cfg.growth).temporal(cfg.temporal)));
    to(cfg.dtype());
}

std::vector<torch::Tensor> SelfCModelImpl::main_parameters() {
    auto params = transform->parameters();
    for (auto& p : prior->parameters())
        params.push_back(p);
    return params;
}

std::vector<torch::Tensor> SelfCModelImpl::surrogate_parameters() {
    return surrogate ? surrogate->parameters() : std::vector<torch::Tensor>{};
}

uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    auto mix = [](uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    uint64_t h = mix(seed);
    h = mix(h ^ a);
    h = mix(h ^ b);
    return mix(h ^ c);
}

namespace {

at::Generator make_generator(uint64_t seed) {
    return at::detail::createCPUGenerator(seed);
}

torch::Dtype model_dtype(SelfCModel& model) {
    return model->transform->parameters().front().scalar_type();
}

VideoClip crop_to_multiple(const VideoClip& x, int k) {
    const int64_t h = x.size(3) / k * k, w = x.size(4) / k * k;
    if (h == 0 || w == 0)
        throw DimensionError("clip of " + std::to_string(x.size(4)) + "x" + std::to_string(x.size(3)) +
                             " is smaller than the scale factor");
    return x.narrow(3, 0, h).narrow(4, 0, w);
}

std::string fmt(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

} // namespace

VideoClip to_8bit(const VideoClip& x) {
    return torch::round(x.clamp(0.0, 1.0) * 255.0) / 255.0;
}

VideoClip downscale(SelfCModel& model, const VideoClip& x) {
    torch::NoGradGuard no_grad;
    return to_8bit(analyze(x.to(model_dtype(model)), model->transform).low);
}

VideoClip upscale(SelfCModel& model, const VideoClip& x_l, const UpscaleOptions& options) {
    torch::NoGradGuard no_grad;
    auto low = x_l.to(model_dtype(model));
    auto g = model->prior->forward(low);
    torch::Tensor high;
    switch (options.hf_mode) {
    case HfMode::Sample: {
        auto gen = make_generator(options.seed);
        auto opts = low.options();
        auto noise = torch::randn(g.location_shape(), gen, opts);
        auto draw = torch::rand(g.location_shape(), gen, opts);
        high = gmm_sample_reparam(g, noise, draw);
        break;
    }
    case HfMode::Mean: high = g.mean(); break;
    case HfMode::Zero: high = torch::zeros(g.location_shape(), low.options()); break;
    }
    return synthesize({low, high, model->k()}, model->transform).clamp(0.0, 1.0);
}

VideoClip bicubic_roundtrip(const VideoClip& x, int k) {
    auto low = to_8bit(bicubic_resample(x, Scale::downscale(k)));
    return bicubic_resample(low, Scale::upscale(k)).clamp(0.0, 1.0);
}

// ---------------------------------------------------------------------------

std::string StepLosses::log_line() const {
    return std::to_string(iteration) + "\t" + fmt("%.9g", conditional) + "\t" + fmt("%.9g", mimic) + "\t" +
           fmt("%.9g", penalize) + "\t" + fmt("%.9g", recons) + "\t" + fmt("%.9g", total);
}

ClipSource::ClipSource(std::vector<ClipRecord> records) {
    for (auto& r : records)
        entries_.push_back({std::move(r), {}});
}

ClipSource::ClipSource(const std::vector<VideoClip>& clips) {
    for (const auto& c : clips) {
        check_clip(c, "ClipSource");
        auto u8 = torch::round(c.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0).to(torch::kUInt8);
        for (int64_t b = 0; b < u8.size(0); ++b)
            entries_.push_back({std::nullopt, u8[b].contiguous()});
    }
}

const torch::Tensor& ClipSource::frames(std::size_t index) {
    auto& e = entries_.at(index);
    if (!e.frames.defined()) {
        auto clip = load_clip(*e.record, torch::kFloat64)[0];
        e.frames = torch::round(clip * 255.0).to(torch::kUInt8).contiguous();
    }
    return e.frames;
}

// ---------------------------------------------------------------------------

namespace {

ClipSource corpus_from(const TrainConfig& cfg) {
    if (cfg.corpus.empty())
        throw ConfigError("training needs a corpus manifest (config key 'corpus')");
    return ClipSource(load_corpus(cfg.corpus, cfg.train_split));
}

std::unique_ptr<torch::optim::Adam> make_optimizer(SelfCModel& model, const TrainConfig& cfg) {
    return std::make_unique<torch::optim::Adam>(
        model->parameters(), torch::optim::AdamOptions(cfg.lr).betas({cfg.adam_beta1, cfg.adam_beta2}));
}

void restore_parameters(SelfCModel& model, const Checkpoint& ckpt) {
    torch::NoGradGuard no_grad;
    for (auto& item : model->named_parameters()) {
        const auto* t = ckpt.find("model/" + item.key());
        if (!t)
            throw CheckpointError("checkpoint lacks parameter '" + item.key() + "'");
        if (t->sizes() != item.value().sizes())
            throw CheckpointError("shape of '" + item.key() + "' differs from the model");
        item.value().copy_(*t);
    }
}

} // namespace

Trainer::Trainer(TrainConfig cfg) : Trainer(cfg, corpus_from(cfg)) {}

Trainer::Trainer(TrainConfig cfg, ClipSource clips) : cfg_(std::move(cfg)), clips_(std::move(clips)) {
    cfg_.validate();
    if (clips_->size() == 0)
        throw InsufficientSampleError("training corpus is empty");
    at::set_num_threads(cfg_.threads);
    torch::manual_seed(cfg_.seed);
    model_ = SelfCModel(cfg_);
    optimizer_ = make_optimizer(model_, cfg_);
}

double Trainer::learning_rate() const {
    return cfg_.lr * std::pow(0.5, static_cast<double>(iteration_ / cfg_.halving_period()));
}

VideoClip Trainer::sample_batch(int64_t iteration) {
    std::mt19937_64 rng(derive_seed(cfg_.seed, 1, static_cast<uint64_t>(iteration)));
    const auto n = clips_->size();
    const auto b = static_cast<std::size_t>(cfg_.batch_size);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < b; ++i) {
        if (n >= b) {
            // partial Fisher-Yates: distinct clips within a batch
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(order[i], order[pick(rng)]);
            picks.push_back(order[i]);
        } else {
            picks.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
        }
    }

    const int64_t len = cfg_.clip_length, p = cfg_.patch;
    std::vector<torch::Tensor> items;
    for (auto idx : picks) {
        const auto& frames = clips_->frames(idx);
        const int64_t t = frames.size(0), h = frames.size(2), w = frames.size(3);
        if (t < len)
            throw DimensionError("training clip " + std::to_string(idx) + " has " + std::to_string(t) +
                                 " frames, clip_length is " + std::to_string(len));
        if (h < p || w < p)
            throw DimensionError("training clip " + std::to_string(idx) + " is smaller than the " +
                                 std::to_string(p) + "px patch");
        const auto t0 = std::uniform_int_distribution<int64_t>(0, t - len)(rng);
        const auto y0 = std::uniform_int_distribution<int64_t>(0, h - p)(rng);
        const auto x0 = std::uniform_int_distribution<int64_t>(0, w - p)(rng);
        const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        const int turns = std::uniform_int_distribution<int>(0, 3)(rng);
        auto clip = frames.narrow(0, t0, len).narrow(2, y0, p).narrow(3, x0, p);
        if (cfg_.augment) {
            if (flip)
                clip = clip.flip({-1});
            if (turns)
                clip = torch::rot90(clip, turns, {-2, -1});
        }
        items.push_back(clip);
    }
    return torch::stack(items).to(cfg_.dtype()) / 255.0;
}

StepLosses Trainer::forward_backward(const VideoClip& batch) {
    check_clip(batch, "train batch");
    auto& m = *model_;
    const int k = cfg_.k;
    auto x = batch.to(cfg_.dtype());

    StepLosses out;
    out.iteration = iteration_;

    auto f = analyze(x, m.transform);
    // The prior sees the unquantized low lane during training.
    auto g = m.prior->forward(f.low);
    auto gen = make_generator(derive_seed(cfg_.seed, 2, static_cast<uint64_t>(iteration_)));
    auto noise = torch::randn(g.location_shape(), gen, x.options());
    auto draw = torch::rand(g.location_shape(), gen, x.options());
    auto f_h_hat = gmm_sample_reparam(g, noise, draw);
    VideoClip x_l = quantize_ste(f.low);

    torch::Tensor codec_loss;
    if (cfg_.task == Task::Compress) {
        std::mt19937_64 rng(derive_seed(cfg_.seed, 3, static_cast<uint64_t>(iteration_)));
        CodecConfig codec = cfg_.codec;
        codec.quality = cfg_.train_qualities[std::uniform_int_distribution<std::size_t>(
            0, cfg_.train_qualities.size() - 1)(rng)];
        out.quality = codec.quality;
        auto pass = cv_passthrough(x_l, codec, m.surrogate);
        x_l = pass.output;
        codec_loss = loss_codec(pass.eta, pass.phi, cfg_.weights.rho);
    }
    auto x_hat = synthesize({x_l, f_h_hat, k}, m.transform);

    SelfcLossParts parts{loss_conditional(f.high, g), loss_mimic(f.low, x, k), loss_penalize(x, f, m.transform),
                         loss_recons(x, x_hat)};
    LossWeights w = cfg_.weights;
    w.k = k;
    w.conditional = conditional_weight_at(cfg_.weights.conditional, iteration_, cfg_.total_iters,
                                          cfg_.conditional_decay_fraction);
    auto total = loss_total_selfc(parts, w);
    if (codec_loss.defined())
        total = loss_total_compression(total, codec_loss, w.codec);

    out.conditional = parts.conditional.item<double>();
    out.mimic = parts.mimic.item<double>();
    out.penalize = parts.penalize.item<double>();
    out.recons = parts.recons.item<double>();
    out.codec = codec_loss.defined() ? codec_loss.item<double>() : 0.0;
    out.total = total.item<double>();
    out.lambda_c = w.conditional;
    for (double v : {out.conditional, out.mimic, out.penalize, out.recons, out.codec, out.total})
        if (!std::isfinite(v))
            throw NonFiniteLossError("non-finite loss at iteration " + std::to_string(iteration_) +
                                     ": L_c=" + fmt("%.9g", out.conditional) + " L_mimic=" + fmt("%.9g", out.mimic) +
                                     " L_pen=" + fmt("%.9g", out.penalize) + " L_recons=" +
                                     fmt("%.9g", out.recons) + " L_codec=" + fmt("%.9g", out.codec) +
                                     " total=" + fmt("%.9g", out.total));

    optimizer_->zero_grad();
    if (codec_loss.defined()) {
        // The surrogate learns from its own loss only; everything else from the total.
        total.backward({}, true, false, m.main_parameters());
        (w.codec * codec_loss).backward({}, false, false, m.surrogate_parameters());
    } else {
        total.backward();
    }
    return out;
}

StepLosses Trainer::step_on(const VideoClip& batch) {
    auto losses = forward_backward(batch);
    const double lr = learning_rate();
    for (auto& group : optimizer_->param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    optimizer_->step();
    ++iteration_;
    return losses;
}

StepLosses Trainer::step() {
    return step_on(sample_batch(iteration_));
}

void Trainer::run(const fs::path& out, std::ostream* progress) {
    fs::create_directories(out);
    const bool fresh = iteration_ == 0;
    std::ofstream log(out / "loss.log", fresh ? std::ios::trunc : std::ios::app);
    if (!log)
        throw IngestionError("cannot write " + (out / "loss.log").string());
    if (fresh)
        log << StepLosses::kLogHeader << '\n';
    const int64_t report_every = std::max<int64_t>(1, cfg_.total_iters / 20);
    while (iteration_ < cfg_.total_iters) {
        auto losses = step();
        log << losses.log_line() << '\n';
        if (progress && (iteration_ % report_every == 0 || iteration_ == cfg_.total_iters))
            *progress << "iter " << iteration_ << "/" << cfg_.total_iters << "  total " << fmt("%.6g", losses.total)
                      << "  L_recons " << fmt("%.6g", losses.recons) << std::endl;
        if (cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0 && iteration_ < cfg_.total_iters)
            save(out / ("checkpoint_" + std::to_string(iteration_)));
    }
    log.flush();
    save(out / "checkpoint");
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.iteration = iteration_;
    ckpt.config_text = cfg_.to_text();
    auto& state = optimizer_->state();
    for (const auto& item : model_->named_parameters()) {
        ckpt.tensors.push_back({"model/" + item.key(), item.value().detach().clone()});
        auto it = state.find(item.value().unsafeGetTensorImpl());
        if (it == state.end())
            continue;
        const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
        ckpt.tensors.push_back({"adam/" + item.key() + "/step", torch::tensor(s.step(), torch::kInt64)});
        ckpt.tensors.push_back({"adam/" + item.key() + "/exp_avg", s.exp_avg().clone()});
        ckpt.tensors.push_back({"adam/" + item.key() + "/exp_avg_sq", s.exp_avg_sq().clone()});
    }
    return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
    restore_parameters(model_, ckpt);
    auto& state = optimizer_->state();
    state.clear();
    for (const auto& item : model_->named_parameters()) {
        const auto* step = ckpt.find("adam/" + item.key() + "/step");
        if (!step)
            continue;
        const auto* m1 = ckpt.find("adam/" + item.key() + "/exp_avg");
        const auto* m2 = ckpt.find("adam/" + item.key() + "/exp_avg_sq");
        if (!m1 || !m2)
            throw CheckpointError("incomplete optimizer state for '" + item.key() + "'");
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->step(step->item<int64_t>());
        s->exp_avg(m1->clone());
        s->exp_avg_sq(m2->clone());
        state[item.value().unsafeGetTensorImpl()] = std::move(s);
    }
    iteration_ = ckpt.iteration;
}

SelfCModel load_model(const fs::path& dir, const KeyValueConfig& overrides, TrainConfig* config_out) {
    auto ckpt = load_checkpoint(dir);
    auto kv = KeyValueConfig::parse(ckpt.config_text, (dir / "config.txt").string());
    for (const auto& [key, value] : overrides.values())
        kv.set(key, value);
    auto cfg = TrainConfig::from(kv);
    SelfCModel model(cfg);
    restore_parameters(model, ckpt);
    model->eval();
    if (config_out)
        *config_out = cfg;
    return model;
}

// ---------------------------------------------------------------------------

std::vector<NamedClip> load_named_clips(const fs::path& manifest, const std::string& split, torch::Dtype dtype) {
    std::vector<NamedClip> clips;
    for (const auto& rec : load_corpus(manifest, split))
        clips.push_back({rec.source_id, load_clip(rec, dtype)});
    return clips;
}

namespace {

ClipMetrics measure(const std::string& id, const VideoClip& x, const VideoClip& x_hat) {
    return {id, psnr(x, x_hat, MetricChannel::Y), psnr(x, x_hat, MetricChannel::Rgb), ssim(x, x_hat, MetricChannel::Y),
            ssim(x, x_hat, MetricChannel::Rgb)};
}

void accumulate(ClipMetrics& acc, const ClipMetrics& m, double weight) {
    acc.psnr_y += weight * m.psnr_y;
    acc.psnr_rgb += weight * m.psnr_rgb;
    acc.ssim_y += weight * m.ssim_y;
    acc.ssim_rgb += weight * m.ssim_rgb;
}

MetricsTable finish(std::vector<ClipMetrics> rows) {
    MetricsTable table;
    table.average.id = "average";
    for (const auto& r : rows)
        accumulate(table.average, r, 1.0 / static_cast<double>(rows.size()));
    table.rows = std::move(rows);
    return table;
}

} // namespace

MetricsTable evaluate_rescale(SelfCModel& model, const std::vector<NamedClip>& clips, const RescaleEvalOptions& options) {
    if (clips.empty())
        throw InsufficientSampleError("evaluate_rescale: no clips");
    if (options.draws < 1)
        throw DomainError("evaluate_rescale: draws must be >= 1");
    torch::NoGradGuard no_grad;
    const int draws = options.hf_mode == HfMode::Sample ? options.draws : 1;
    std::vector<ClipMetrics> rows;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        auto x = crop_to_multiple(clips[i].clip, model->k()).to(model_dtype(model));
        auto x_l = downscale(model, x);
        ClipMetrics row{clips[i].id};
        for (int d = 0; d < draws; ++d) {
            UpscaleOptions up{options.hf_mode, derive_seed(options.seed, 4, i, static_cast<uint64_t>(d))};
            accumulate(row, measure(clips[i].id, x, to_8bit(upscale(model, x_l, up))), 1.0 / draws);
        }
        rows.push_back(row);
    }
    return finish(std::move(rows));
}

MetricsTable evaluate_bicubic(const std::vector<NamedClip>& clips, int k) {
    if (clips.empty())
        throw InsufficientSampleError("evaluate_bicubic: no clips");
    std::vector<ClipMetrics> rows;
    for (const auto& c : clips) {
        auto x = crop_to_multiple(c.clip, k);
        rows.push_back(measure(c.id, x, to_8bit(bicubic_roundtrip(x, k))));
    }
    return finish(std::move(rows));
}

void write_metrics_table(std::ostream& out, const MetricsTable& table) {
    out << "clip\tpsnr_y\tpsnr_rgb\tssim_y\tssim_rgb\n";
    auto row = [&](const ClipMetrics& m) {
        out << m.id << '\t' << fmt("%.4f", m.psnr_y) << '\t' << fmt("%.4f", m.psnr_rgb) << '\t'
            << fmt("%.6f", m.ssim_y) << '\t' << fmt("%.6f", m.ssim_rgb) << '\n';
    };
    for (const auto& r : table.rows)
        row(r);
    row(table.average);
}

CompressEvalResult evaluate_compress(SelfCModel& model, const std::vector<NamedClip>& clips, const CodecConfig& codec,
                                     const std::vector<int>& qualities, const RescaleEvalOptions& options) {
    if (clips.empty())
        throw InsufficientSampleError("evaluate_compress: no clips");
    torch::NoGradGuard no_grad;
    const int k = model->k();
    const auto n = static_cast<double>(clips.size());
    CompressEvalResult result;
    for (int q : qualities) {
        CodecConfig c = codec;
        c.quality = q;
        c.validate();
        RDPoint sys_p, sys_m, anc_p, anc_m, bic_p, bic_m;
        for (std::size_t i = 0; i < clips.size(); ++i) {
            auto x = crop_to_multiple(clips[i].clip, k).to(model_dtype(model));
            const int64_t frames = x.size(1), h = x.size(3), w = x.size(4);

            auto coded = codec_roundtrip(downscale(model, x), c);
            UpscaleOptions up{options.hf_mode, derive_seed(options.seed, 5, i, static_cast<uint64_t>(q))};
            auto x_sys = to_8bit(upscale(model, coded.decoded, up));
            const double sys_rate = bpp(coded.total_bytes(), frames, w, h) / n;
            sys_p.bpp += sys_rate;
            sys_m.bpp += sys_rate;
            sys_p.quality += psnr(x, x_sys) / n;
            sys_m.quality += ms_ssim(x, x_sys) / n;

            auto anchor = codec_roundtrip(x, c);
            auto x_anc = anchor.decoded.to(x.scalar_type());
            const double anc_rate = bpp(anchor.total_bytes(), frames, w, h) / n;
            anc_p.bpp += anc_rate;
            anc_m.bpp += anc_rate;
            anc_p.quality += psnr(x, x_anc) / n;
            anc_m.quality += ms_ssim(x, x_anc) / n;

            auto bic = codec_roundtrip(to_8bit(bicubic_resample(x, Scale::downscale(k))), c);
            auto x_bic = to_8bit(bicubic_resample(bic.decoded.to(x.scalar_type()), Scale::upscale(k)));
            const double bic_rate = bpp(bic.total_bytes(), frames, w, h) / n;
            bic_p.bpp += bic_rate;
            bic_m.bpp += bic_rate;
            bic_p.quality += psnr(x, x_bic) / n;
            bic_m.quality += ms_ssim(x, x_bic) / n;
        }
        result.system_psnr.points.push_back(sys_p);
        result.system_msssim.points.push_back(sys_m);
        result.anchor_psnr.points.push_back(anc_p);
        result.anchor_msssim.points.push_back(anc_m);
        result.bicubic_psnr.points.push_back(bic_p);
        result.bicubic_msssim.points.push_back(bic_m);
    }
    for (auto* curve : {&result.system_psnr, &result.system_msssim, &result.anchor_psnr, &result.anchor_msssim,
                        &result.bicubic_psnr, &result.bicubic_msssim})
        curve->sort();
    auto try_bdbr = [](const RDCurve& test, const RDCurve& anchor) -> std::optional<double> {
        if (test.points.size() < 4 || anchor.points.size() < 4)
            return std::nullopt;
        try {
            return bdbr(test, anchor);
        } catch (const DomainError&) {
            return std::nullopt;
        }
    };
    result.bdbr_psnr = try_bdbr(result.system_psnr, result.anchor_psnr);
    result.bdbr_msssim = try_bdbr(result.system_msssim, result.anchor_msssim);
    return result;
}

} // namespace selfc
