#include "selfc/data.hpp"

#include "selfc/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

namespace selfc {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
    static const std::set<std::string> kExt{".png", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"};
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return kExt.count(ext) > 0;
}

} // namespace

ClipRecord clip_record_from_dir(const fs::path& dir, int64_t length) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw IngestionError("clip folder not found: " + dir.string());
    ClipRecord rec;
    rec.source_id = dir.filename().string();
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image(entry.path()))
            rec.frames.push_back(entry.path());
    std::sort(rec.frames.begin(), rec.frames.end());
    if (rec.frames.empty())
        throw IngestionError("clip folder holds no frames: " + dir.string());
    if (length > 0) {
        if (static_cast<int64_t>(rec.frames.size()) < length)
            throw IngestionError(dir.string() + ": expected " + std::to_string(length) + " frames, found " +
                                 std::to_string(rec.frames.size()));
        rec.frames.resize(length);
    }
    return rec;
}

VideoClip load_clip(const ClipRecord& record, torch::Dtype dtype) {
    if (record.frames.empty())
        throw IngestionError("clip '" + record.source_id + "' has no frames");
    std::vector<torch::Tensor> frames;
    int rows = -1, cols = -1;
    for (const auto& path : record.frames) {
        cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
        if (img.empty())
            throw IngestionError("cannot decode frame " + path.string());
        if (img.depth() != CV_8U)
            throw IngestionError("frame is not 8-bit: " + path.string());
        cv::Mat rgb;
        switch (img.channels()) {
        case 1: cv::cvtColor(img, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(img, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw IngestionError("unsupported channel count in " + path.string());
        }
        if (rows < 0) {
            rows = rgb.rows;
            cols = rgb.cols;
        } else if (rgb.rows != rows || rgb.cols != cols) {
            throw IngestionError("frame size mismatch in " + path.string() + ": " + std::to_string(rgb.cols) +
                                 "x" + std::to_string(rgb.rows) + " vs " + std::to_string(cols) + "x" +
                                 std::to_string(rows));
        }
        auto t = torch::from_blob(rgb.data, {rows, cols, 3}, torch::kUInt8).clone();
        frames.push_back(t.permute({2, 0, 1}));
    }
    return (torch::stack(frames).to(torch::kFloat64) / 255.0).unsqueeze(0).to(dtype);
}

void save_clip(const VideoClip& clip, const fs::path& dir) {
    if (clip.dim() == 5 && clip.size(0) != 1)
        throw DimensionError("save_clip: expected a single clip, got a batch of " + std::to_string(clip.size(0)));
    torch::Tensor frames = clip.dim() == 5 ? clip[0] : clip;
    if (frames.dim() != 4 || frames.size(1) != 3)
        throw DimensionError("save_clip: expected a single 3-channel clip");
    fs::create_directories(dir);
    auto bytes = torch::round(frames.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0)
                     .to(torch::kUInt8)
                     .permute({0, 2, 3, 1})
                     .contiguous();
    for (int64_t t = 0; t < bytes.size(0); ++t) {
        auto f = bytes[t].contiguous();
        cv::Mat rgb(static_cast<int>(f.size(0)), static_cast<int>(f.size(1)), CV_8UC3, f.data_ptr<uint8_t>());
        cv::Mat bgr;
        cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04lld.png", static_cast<long long>(t));
        if (!cv::imwrite((dir / name).string(), bgr))
            throw IngestionError("cannot write " + (dir / name).string());
    }
}

VideoClip flip_horizontal(const VideoClip& clip) {
    return clip.flip({-1});
}

VideoClip rotate90(const VideoClip& clip, int times) {
    return torch::rot90(clip, ((times % 4) + 4) % 4, {-2, -1});
}

VideoClip augment(const VideoClip& clip, const AugmentConfig& cfg) {
    check_clip(clip, "augment");
    const int64_t h = clip.size(3), w = clip.size(4);
    if (cfg.crop_height > h || cfg.crop_width > w)
        throw DimensionError("augment: crop " + std::to_string(cfg.crop_width) + "x" +
                             std::to_string(cfg.crop_height) + " exceeds frame " + std::to_string(w) + "x" +
                             std::to_string(h));
    std::mt19937_64 rng(cfg.seed);
    const int64_t y0 = std::uniform_int_distribution<int64_t>(0, h - cfg.crop_height)(rng);
    const int64_t x0 = std::uniform_int_distribution<int64_t>(0, w - cfg.crop_width)(rng);
    const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    const int turns = std::uniform_int_distribution<int>(0, 3)(rng);

    auto out = clip.narrow(3, y0, cfg.crop_height).narrow(4, x0, cfg.crop_width);
    if (cfg.flip && flip)
        out = flip_horizontal(out);
    if (cfg.rotate90 && turns != 0)
        out = rotate90(out, turns);
    return out.contiguous();
}

VideoClip blur_downsample(const VideoClip& x, double sigma, int k) {
    check_clip(x, "blur_downsample");
    if (k < 1 || x.size(3) % k != 0 || x.size(4) % k != 0)
        throw DimensionError("blur_downsample: frame size not divisible by " + std::to_string(k));
    auto blurred = gaussian_blur(x, sigma);
    using torch::indexing::Slice;
    return blurred.index({Slice(), Slice(), Slice(), Slice(0, torch::indexing::None, k),
                          Slice(0, torch::indexing::None, k)});
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in)
        throw IngestionError("cannot open manifest " + manifest.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw IngestionError(manifest.string() + ":" + std::to_string(lineno) +
                                 ": expected '<split>\\t<clip-dir>'");
        fs::path dir = line.substr(tab + 1);
        if (dir.is_relative())
            dir = manifest.parent_path() / dir;
        entries.push_back({line.substr(0, tab), dir});
    }
    return entries;
}

void write_manifest(const fs::path& manifest, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(manifest);
    for (const auto& e : entries)
        out << e.split << '\t' << e.clip_dir.string() << '\n';
    if (!out)
        throw IngestionError("cannot write manifest " + manifest.string());
}

std::vector<ClipRecord> load_corpus(const fs::path& manifest, const std::string& split, int64_t length) {
    std::vector<ClipRecord> records;
    for (const auto& e : read_manifest(manifest))
        if (split.empty() || e.split == split)
            records.push_back(clip_record_from_dir(e.clip_dir, length));
    if (records.empty())
        throw IngestionError("manifest " + manifest.string() + " lists no clips for split '" + split + "'");
    return records;
}

VideoClip synthetic_clip(int64_t frames, int64_t height, int64_t width, std::mt19937_64& rng,
                         torch::Dtype dtype) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double vx = uniform(-1.5, 1.5);
    const double vy = uniform(-1.5, 1.5);

    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto ys = torch::arange(height, opts).view({1, height, 1});
    auto xs = torch::arange(width, opts).view({1, 1, width});
    auto ts = torch::arange(frames, opts).view({frames, 1, 1});
    auto px = xs - vx * ts; // content coordinates after translation
    auto py = ys - vy * ts;

    auto clip = torch::zeros({frames, 3, height, width}, opts);
    for (int c = 0; c < 3; ++c)
        clip.select(1, c).fill_(uniform(0.3, 0.7));

    const int gratings = 3;
    for (int g = 0; g < gratings; ++g) {
        const double theta = uniform(0.0, std::numbers::pi);
        const double period = uniform(3.0, 14.0);
        const double phase = uniform(0.0, 2.0 * std::numbers::pi);
        auto wave = torch::sin((std::cos(theta) * px + std::sin(theta) * py) * (2.0 * std::numbers::pi / period) +
                               phase);
        for (int c = 0; c < 3; ++c)
            clip.select(1, c).add_(uniform(0.03, 0.12) * wave);
    }
    const int rects = 4;
    for (int r = 0; r < rects; ++r) {
        const double x0 = uniform(-0.2, 0.9) * width, y0 = uniform(-0.2, 0.9) * height;
        const double x1 = x0 + uniform(0.1, 0.5) * width, y1 = y0 + uniform(0.1, 0.5) * height;
        auto mask = ((px >= x0) & (px < x1) & (py >= y0) & (py < y1)).to(torch::kFloat64);
        for (int c = 0; c < 3; ++c)
            clip.select(1, c).add_(uniform(-0.25, 0.25) * mask);
    }
    return (torch::round(clip.clamp(0.0, 1.0) * 255.0) / 255.0).unsqueeze(0).to(dtype);
}

fs::path write_synthetic_corpus(const fs::path& root, int clips, int64_t frames, int64_t height, int64_t width,
                                uint64_t seed, const std::string& split) {
    fs::create_directories(root);
    std::mt19937_64 rng(seed);
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < clips; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d", i);
        save_clip(synthetic_clip(frames, height, width, rng), root / name);
        entries.push_back({split, name});
    }
    const auto manifest = root / "manifest.txt";
    write_manifest(manifest, entries);
    return manifest;
}

} // namespace selfc
