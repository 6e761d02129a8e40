// Command-line front end: training, evaluation, per-clip rescaling and
// compression, BD-rate and RD plots.

#include "selfc/errors.hpp"
#include "selfc/trainer.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace selfc;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
    cmd->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--override", c.overrides, "key=value assignment applied after --config");
    cmd->add_option("--seed", c.seed, "random seed");
    auto* out = cmd->add_option("--out", c.out, "output path");
    if (needs_out)
        out->required();
}

KeyValueConfig key_values(const Common& c) {
    KeyValueConfig kv = c.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(c.config);
    for (const auto& o : c.overrides)
        kv.set_override(o);
    if (c.seed)
        kv.set("seed", std::to_string(*c.seed));
    return kv;
}

std::string fixed(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::vector<NamedClip> eval_clips(const TrainConfig& cfg, const std::string& manifest) {
    const std::string path = manifest.empty() ? cfg.corpus : manifest;
    if (path.empty())
        throw UsageError("no corpus: pass a manifest or set 'corpus'");
    return load_named_clips(path, cfg.eval_split, cfg.dtype());
}

VideoClip load_frames(const std::string& dir, torch::Dtype dtype) {
    return load_clip(clip_record_from_dir(dir), dtype);
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out)
        throw IngestionError("cannot write " + p.string());
    return out;
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& resume) {
    auto cfg = TrainConfig::from(key_values(c));
    Trainer trainer(cfg);
    if (!resume.empty()) {
        auto ckpt = load_checkpoint(resume);
        trainer.restore(ckpt);
    }
    trainer.run(c.out, &std::cerr);
    std::cout << "checkpoint " << (fs::path(c.out) / "checkpoint").string() << "\n";
    return 0;
}

int cmd_eval_rescale(const Common& c, const std::string& ckpt, const std::string& manifest,
                     const std::string& baseline) {
    TrainConfig cfg;
    auto model = load_model(ckpt, key_values(c), &cfg);
    auto clips = eval_clips(cfg, manifest);
    auto table = evaluate_rescale(model, clips, {cfg.eval_draws, cfg.hf_mode, cfg.seed});
    if (c.out.empty()) {
        write_metrics_table(std::cout, table);
    } else {
        auto out = open_out(c.out);
        write_metrics_table(out, table);
    }
    if (!baseline.empty()) {
        auto out = open_out(baseline);
        write_metrics_table(out, evaluate_bicubic(clips, cfg.k));
    }
    return 0;
}

int cmd_eval_compress(const Common& c, const std::string& ckpt, const std::string& manifest) {
    TrainConfig cfg;
    auto model = load_model(ckpt, key_values(c), &cfg);
    auto clips = eval_clips(cfg, manifest);
    auto res = evaluate_compress(model, clips, cfg.codec, cfg.eval_qualities, {1, cfg.hf_mode, cfg.seed});
    const fs::path dir = c.out;
    fs::create_directories(dir);
    write_rd_curve(dir / "system_psnr.tsv", res.system_psnr);
    write_rd_curve(dir / "system_msssim.tsv", res.system_msssim);
    write_rd_curve(dir / "anchor_psnr.tsv", res.anchor_psnr);
    write_rd_curve(dir / "anchor_msssim.tsv", res.anchor_msssim);
    write_rd_curve(dir / "bicubic_psnr.tsv", res.bicubic_psnr);
    write_rd_curve(dir / "bicubic_msssim.tsv", res.bicubic_msssim);
    auto out = open_out(dir / "bdbr.tsv");
    out << "metric\tbdbr_vs_anchor\n";
    out << "psnr\t" << (res.bdbr_psnr ? fixed("%.2f", *res.bdbr_psnr) : "n/a") << "\n";
    out << "ms_ssim\t" << (res.bdbr_msssim ? fixed("%.2f", *res.bdbr_msssim) : "n/a") << "\n";
    return 0;
}

int cmd_downscale(const Common& c, const std::string& ckpt, const std::string& input) {
    TrainConfig cfg;
    auto model = load_model(ckpt, key_values(c), &cfg);
    save_clip(downscale(model, load_frames(input, cfg.dtype())), c.out);
    return 0;
}

int cmd_upscale(const Common& c, const std::string& ckpt, const std::string& input) {
    TrainConfig cfg;
    auto model = load_model(ckpt, key_values(c), &cfg);
    save_clip(to_8bit(upscale(model, load_frames(input, cfg.dtype()), {cfg.hf_mode, cfg.seed})), c.out);
    return 0;
}

int cmd_compress(const Common& c, const std::string& ckpt, const std::string& input) {
    TrainConfig cfg;
    auto model = load_model(ckpt, key_values(c), &cfg);
    auto x = load_frames(input, cfg.dtype());
    auto coded = codec_roundtrip(downscale(model, x), cfg.codec);
    auto x_hat = to_8bit(upscale(model, coded.decoded, {cfg.hf_mode, cfg.seed}));
    save_clip(x_hat, c.out);
    std::cout << "bpp\t" << fixed("%.6f", bpp(coded.total_bytes(), x.size(1), x.size(4), x.size(3))) << "\n";
    if (x_hat.sizes() == x.sizes())
        std::cout << "psnr\t" << fixed("%.4f", psnr(x, x_hat)) << "\n";
    return 0;
}

int cmd_bdbr(const std::string& test, const std::string& anchor) {
    auto a = read_rd_curve(test), b = read_rd_curve(anchor);
    a.sort();
    b.sort();
    std::cout << fixed("%.2f", bdbr(a, b)) << "\n";
    return 0;
}

int cmd_plot_rd(const Common& c, const std::vector<std::string>& inputs, const std::string& ylabel) {
    std::vector<RDCurve> curves;
    for (const auto& p : inputs) {
        auto curve = read_rd_curve(p);
        curve.sort();
        curve.validate(1);
        curves.push_back(curve);
    }
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& cv : curves)
        for (const auto& p : cv.points) {
            x0 = std::min(x0, p.bpp), x1 = std::max(x1, p.bpp);
            y0 = std::min(y0, p.quality), y1 = std::max(y1, p.quality);
        }
    const double padx = std::max(1e-9, 0.05 * (x1 - x0)), pady = std::max(1e-9, 0.05 * (y1 - y0));
    x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;

    const int width = 800, height = 560, left = 80, right = 20, top = 34, bottom = 60;
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    auto px = [&](double bpp_v, double q) {
        return cv::Point(left + static_cast<int>((bpp_v - x0) / (x1 - x0) * (width - left - right)),
                         height - bottom - static_cast<int>((q - y0) / (y1 - y0) * (height - top - bottom)));
    };
    const cv::Scalar black(0, 0, 0), grid(225, 225, 225);
    const auto font = cv::FONT_HERSHEY_SIMPLEX;
    for (int i = 0; i <= 5; ++i) {
        const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
        cv::line(img, px(xv, y0), px(xv, y1), grid);
        cv::line(img, px(x0, yv), px(x1, yv), grid);
        cv::putText(img, fixed("%.3f", xv), px(xv, y0) + cv::Point(-20, 20), font, 0.4, black);
        cv::putText(img, fixed("%.2f", yv), px(x0, yv) + cv::Point(-70, 4), font, 0.4, black);
    }
    cv::rectangle(img, px(x0, y1), px(x1, y0), black);
    cv::putText(img, "bpp", cv::Point(width / 2, height - 15), font, 0.5, black);
    cv::putText(img, ylabel, cv::Point(5, top - 12), font, 0.5, black);

    static const std::vector<cv::Scalar> kColors{{200, 80, 30}, {40, 40, 220}, {40, 160, 40},
                                                 {160, 40, 160}, {20, 140, 200}, {90, 90, 90}};
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& color = kColors[i % kColors.size()];
        std::vector<cv::Point> pts;
        for (const auto& p : curves[i].points)
            pts.push_back(px(p.bpp, p.quality));
        cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
        for (const auto& p : pts)
            cv::circle(img, p, 4, color, cv::FILLED, cv::LINE_AA);
        const cv::Point legend(width - right - 230, top + 20 + 20 * static_cast<int>(i));
        cv::line(img, legend, legend + cv::Point(20, 0), color, 2);
        cv::putText(img, fs::path(inputs[i]).stem().string(), legend + cv::Point(26, 4), font, 0.45, black);
    }
    if (fs::path(c.out).has_parent_path())
        fs::create_directories(fs::path(c.out).parent_path());
    if (!cv::imwrite(c.out, img))
        throw IngestionError("cannot write plot " + c.out);
    return 0;
}

int fail(const std::string& kind, const std::string& detail) {
    std::cerr << "error: " << kind << "\n" << detail << "\n";
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app("SelfC video rescaling and compression toolkit");
    app.require_subcommand(1);

    Common common;
    std::string resume, ckpt, input, manifest, baseline, test_curve, anchor_curve, ylabel = "quality";
    std::vector<std::string> curve_files;

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, common, true);
    train->add_option("--resume", resume, "checkpoint directory to continue from")->check(CLI::ExistingDirectory);

    auto* eval_rescale = app.add_subcommand("eval-rescale", "metric table of learned rescaling");
    add_common(eval_rescale, common, false);
    eval_rescale->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
    eval_rescale->add_option("manifest", manifest, "corpus manifest (default: config 'corpus')")
        ->check(CLI::ExistingFile);
    eval_rescale->add_option("--baseline", baseline, "also write the bicubic table here");

    auto* eval_compress = app.add_subcommand("eval-compress", "rate-distortion sweep");
    add_common(eval_compress, common, true);
    eval_compress->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
    eval_compress->add_option("manifest", manifest)->check(CLI::ExistingFile);

    auto* down = app.add_subcommand("downscale", "learned downscaling of a frame folder");
    add_common(down, common, true);
    down->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
    down->add_option("frames", input)->required()->check(CLI::ExistingDirectory);

    auto* up = app.add_subcommand("upscale", "learned upscaling of a frame folder");
    add_common(up, common, true);
    up->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
    up->add_option("frames", input)->required()->check(CLI::ExistingDirectory);

    auto* compress = app.add_subcommand("compress", "downscale, codec, upscale one frame folder");
    add_common(compress, common, true);
    compress->add_option("checkpoint", ckpt)->required()->check(CLI::ExistingDirectory);
    compress->add_option("frames", input)->required()->check(CLI::ExistingDirectory);

    auto* bd = app.add_subcommand("bdbr", "BD-rate of a test curve against an anchor, in percent");
    bd->add_option("test", test_curve)->required()->check(CLI::ExistingFile);
    bd->add_option("anchor", anchor_curve)->required()->check(CLI::ExistingFile);

    auto* plot = app.add_subcommand("plot-rd", "render RD curves to an image");
    add_common(plot, common, true);
    plot->add_option("curves", curve_files)->required()->check(CLI::ExistingFile);
    plot->add_option("--ylabel", ylabel, "quality axis label");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("UsageError", e.what());
    }

    try {
        if (*train)
            return cmd_train(common, resume);
        if (*eval_rescale)
            return cmd_eval_rescale(common, ckpt, manifest, baseline);
        if (*eval_compress)
            return cmd_eval_compress(common, ckpt, manifest);
        if (*down)
            return cmd_downscale(common, ckpt, input);
        if (*up)
            return cmd_upscale(common, ckpt, input);
        if (*compress)
            return cmd_compress(common, ckpt, input);
        if (*bd)
            return cmd_bdbr(test_curve, anchor_curve);
        if (*plot)
            return cmd_plot_rd(common, curve_files, ylabel);
    } catch (const selfc::Error& e) {
        return fail(e.kind(), e.what());
    } catch (const c10::Error& e) {
        return fail("InternalError", e.what_without_backtrace());
    } catch (const std::exception& e) {
        return fail("InternalError", e.what());
    }
    return fail("UsageError", "no command given");
}
