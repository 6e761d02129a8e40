#include "selfc/codec.hpp"

#include "selfc/errors.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <iterator>
#include <spawn.h>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace selfc {

namespace fs = std::filesystem;

CodecKind parse_codec_kind(const std::string& s) {
    if (s == "hevc" || s == "h265")
        return CodecKind::Hevc;
    if (s == "avc" || s == "h264")
        return CodecKind::Avc;
    if (s == "mock")
        return CodecKind::Mock;
    throw ConfigError("unknown codec '" + s + "' (expected hevc, avc or mock)");
}

CodecMode parse_codec_mode(const std::string& s) {
    if (s == "default")
        return CodecMode::Default;
    if (s == "zerolatency")
        return CodecMode::ZeroLatency;
    throw ConfigError("unknown codec mode '" + s + "' (expected default or zerolatency)");
}

RateControl parse_rate_control(const std::string& s) {
    if (s == "qp")
        return RateControl::Qp;
    if (s == "crf")
        return RateControl::Crf;
    throw ConfigError("unknown rate control '" + s + "' (expected qp or crf)");
}

std::string to_string(CodecKind kind) {
    switch (kind) {
    case CodecKind::Hevc: return "hevc";
    case CodecKind::Avc: return "avc";
    case CodecKind::Mock: return "mock";
    }
    return "?";
}

std::string to_string(CodecMode mode) {
    return mode == CodecMode::ZeroLatency ? "zerolatency" : "default";
}

void CodecConfig::validate() const {
    if (quality < 0 || quality > 51)
        throw ConfigError("codec quality must lie in [0, 51], got " + std::to_string(quality));
    if (fps <= 0)
        throw ConfigError("codec fps must be positive");
}

int64_t CodecOutput::total_bytes() const {
    int64_t total = 0;
    for (const auto& r : reports)
        total += r.encoded_bytes;
    return total;
}

// ---------------------------------------------------------------------------
// Raw frames

namespace {

torch::Tensor as_frames(const torch::Tensor& clip) {
    if (clip.dim() == 5 && clip.size(0) == 1)
        return clip[0];
    if (clip.dim() == 4)
        return clip;
    throw DimensionError("raw frames: expected a single (T,3,H,W) clip");
}

} // namespace

std::vector<uint8_t> serialize_frames(const torch::Tensor& clip, PlaneColor color) {
    auto frames = as_frames(clip).detach().to(torch::kFloat64);
    if (frames.size(1) != 3)
        throw DimensionError("raw frames: expected 3 channels");
    auto rgb = torch::round(frames.clamp(0.0, 1.0) * 255.0);
    torch::Tensor planes = rgb;
    if (color == PlaneColor::Bt601YCbCr) {
        auto r = rgb.select(1, 0), g = rgb.select(1, 1), b = rgb.select(1, 2);
        auto y = 0.299 * r + 0.587 * g + 0.114 * b;
        auto cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
        auto cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
        planes = torch::round(torch::stack({y, cb, cr}, 1)).clamp(0.0, 255.0);
    }
    auto bytes = planes.to(torch::kUInt8).contiguous();
    const auto* p = bytes.data_ptr<uint8_t>();
    return {p, p + bytes.numel()};
}

VideoClip parse_frames(std::span<const uint8_t> bytes, int64_t frames, int64_t height, int64_t width,
                       PlaneColor color, torch::Dtype dtype) {
    const int64_t expected = frames * 3 * height * width;
    if (static_cast<int64_t>(bytes.size()) != expected)
        throw CodecError("raw frames: expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
    auto planes = torch::from_blob(const_cast<uint8_t*>(bytes.data()), {frames, 3, height, width}, torch::kUInt8)
                      .to(torch::kFloat64);
    torch::Tensor rgb = planes;
    if (color == PlaneColor::Bt601YCbCr) {
        auto y = planes.select(1, 0), cb = planes.select(1, 1) - 128.0, cr = planes.select(1, 2) - 128.0;
        auto r = y + 1.402 * cr;
        auto g = y - 0.344136 * cb - 0.714136 * cr;
        auto b = y + 1.772 * cb;
        rgb = torch::round(torch::stack({r, g, b}, 1)).clamp(0.0, 255.0);
    }
    return (rgb / 255.0).unsqueeze(0).to(dtype);
}

// ---------------------------------------------------------------------------
// External encoder

namespace {

bool is_executable(const fs::path& p) {
    std::error_code ec;
    return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

class TempDir {
public:
    TempDir() {
        auto tmpl = (fs::temp_directory_path() / "selfc-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr)
            throw EnvironmentError("cannot create a temporary directory");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// Runs argv with stdin from /dev/null and stdout+stderr captured to `log`.
int run_process(const std::vector<std::string>& argv, const fs::path& log) {
    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);

    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
        throw EnvironmentError("cannot launch " + argv[0] + ": " + std::strerror(rc));
    int status = 0;
    if (::waitpid(pid, &status, 0) < 0)
        throw EnvironmentError("waitpid failed for " + argv[0]);
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

std::string read_text(const fs::path& p, std::size_t limit = 4096) {
    std::ifstream in(p);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (s.size() > limit)
        s = "..." + s.substr(s.size() - limit);
    return s;
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw CodecError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, std::span<const uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw CodecError("cannot write " + p.string());
}

std::string codec_params(const CodecConfig& cfg) {
    if (cfg.lossless)
        return cfg.codec == CodecKind::Hevc ? "lossless=1" : "qp=0";
    return std::string(cfg.rate_control == RateControl::Crf ? "crf=" : "qp=") + std::to_string(cfg.quality);
}

} // namespace

fs::path find_encoder() {
    if (const char* env = std::getenv("SELFC_FFMPEG"); env != nullptr && *env != '\0') {
        if (!is_executable(env))
            throw EnvironmentError(std::string("SELFC_FFMPEG=") + env + " is not an executable file");
        return env;
    }
    if (const char* path = std::getenv("PATH")) {
        std::stringstream ss(path);
        std::string dir;
        while (std::getline(ss, dir, ':')) {
            if (dir.empty())
                continue;
            auto candidate = fs::path(dir) / "ffmpeg";
            if (is_executable(candidate))
                return candidate;
        }
    }
    throw EnvironmentError("no encoder binary: set SELFC_FFMPEG or put ffmpeg on PATH");
}

bool encoder_available() {
    try {
        find_encoder();
        return true;
    } catch (const EnvironmentError&) {
        return false;
    }
}

std::vector<std::string> encoder_command(const CodecConfig& cfg, const std::string& binary, int64_t width,
                                         int64_t height, const std::string& raw_path,
                                         const std::string& bitstream_path) {
    if (cfg.codec == CodecKind::Mock)
        throw ConfigError("the mock codec has no command line");
    const bool hevc = cfg.codec == CodecKind::Hevc;
    std::vector<std::string> argv{binary,
                                  "-pix_fmt", cfg.pix_fmt,
                                  "-s", std::to_string(width) + "x" + std::to_string(height),
                                  "-r", std::to_string(cfg.fps),
                                  "-i", raw_path,
                                  "-c:v", hevc ? "libx265" : "libx264",
                                  "-preset", cfg.preset};
    if (cfg.mode == CodecMode::ZeroLatency) {
        argv.emplace_back("-tune");
        argv.emplace_back("zerolatency");
    }
    argv.emplace_back(hevc ? "-x265-params" : "-x264-params");
    argv.push_back(codec_params(cfg));
    argv.push_back(bitstream_path);
    return argv;
}

std::vector<std::string> decoder_command(const CodecConfig& cfg, const std::string& binary,
                                         const std::string& bitstream_path, const std::string& raw_path) {
    return {binary, "-i", bitstream_path, "-f", "rawvideo", "-pix_fmt", cfg.pix_fmt, raw_path};
}

std::string render_command(const std::vector<std::string>& argv) {
    std::string out;
    for (const auto& a : argv) {
        if (!out.empty())
            out += ' ';
        const bool plain = !a.empty() && a.find_first_of(" \t\"'$\\=") == std::string::npos;
        out += plain ? a : "\"" + a + "\"";
    }
    return out;
}

namespace {

CodecOutput external_roundtrip(const VideoClip& clip, const CodecConfig& cfg) {
    const auto binary = find_encoder().string();
    const int64_t b = clip.size(0), t = clip.size(1), h = clip.size(3), w = clip.size(4);
    const PlaneColor color = cfg.lossless ? PlaneColor::Rgb : PlaneColor::Bt601YCbCr;
    const char* ext = cfg.codec == CodecKind::Hevc ? "bitstream.hevc" : "bitstream.h264";

    CodecOutput out;
    std::vector<torch::Tensor> decoded;
    for (int64_t i = 0; i < b; ++i) {
        TempDir dir;
        const auto raw = dir.path() / "video.yuv";
        const auto stream = dir.path() / ext;
        const auto back = dir.path() / "decoded.yuv";
        const auto log = dir.path() / "codec.log";
        write_bytes(raw, serialize_frames(clip[i], color));

        auto enc = encoder_command(cfg, binary, w, h, raw.string(), stream.string());
        if (int rc = run_process(enc, log); rc != 0)
            throw CodecError("encoder exited with status " + std::to_string(rc) + ": " + render_command(enc) +
                             "\n" + read_text(log));
        std::error_code ec;
        const auto size = static_cast<int64_t>(fs::file_size(stream, ec));
        if (ec || size <= 0)
            throw CodecError("encoder produced no bitstream: " + render_command(enc) + "\n" + read_text(log));

        auto dec = decoder_command(cfg, binary, stream.string(), back.string());
        if (int rc = run_process(dec, log); rc != 0)
            throw CodecError("decoder exited with status " + std::to_string(rc) + ": " + render_command(dec) +
                             "\n" + read_text(log));
        auto bytes = read_bytes(back);
        decoded.push_back(parse_frames(bytes, t, h, w, color, clip.scalar_type()));
        out.reports.push_back({size, t, w, h});
    }
    out.decoded = torch::cat(decoded, 0);
    return out;
}

int64_t deflate_size(const std::vector<int16_t>& symbols) {
    const auto* src = reinterpret_cast<const Bytef*>(symbols.data());
    const uLong src_len = static_cast<uLong>(symbols.size() * sizeof(int16_t));
    uLongf dst_len = compressBound(src_len);
    std::vector<Bytef> dst(dst_len);
    if (compress2(dst.data(), &dst_len, src, src_len, 6) != Z_OK)
        throw CodecError("mock codec: deflate failed");
    return static_cast<int64_t>(dst_len);
}

} // namespace

double mock_quant_step(int quality) {
    return std::pow(2.0, (quality - 4) / 6.0) / 255.0;
}

VideoClip mock_smooth_path(const VideoClip& clip, const CodecConfig& cfg) {
    return cfg.lossless ? clip : gaussian_blur(clip, kMockBlurSigma);
}

CodecOutput mock_codec(const VideoClip& clip, const CodecConfig& cfg) {
    torch::NoGradGuard guard;
    auto x8 = torch::round(clip.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0) / 255.0;
    const double step = cfg.lossless ? 1.0 / 255.0 : mock_quant_step(cfg.quality);
    auto index = torch::round(mock_smooth_path(x8, cfg) / step);
    auto decoded = torch::round((index * step).clamp(0.0, 1.0) * 255.0) / 255.0;

    CodecOutput out;
    out.decoded = decoded.to(clip.scalar_type());
    // Horizontal DPCM of the indices, deflated per clip.
    auto residual = torch::cat({index.narrow(4, 0, 1), index.diff(1, 4)}, 4)
                        .clamp(-32768, 32767)
                        .to(torch::kInt16)
                        .contiguous();
    constexpr int64_t kHeaderBytes = 16;
    for (int64_t i = 0; i < clip.size(0); ++i) {
        auto r = residual[i].contiguous();
        std::vector<int16_t> symbols(r.data_ptr<int16_t>(), r.data_ptr<int16_t>() + r.numel());
        out.reports.push_back({kHeaderBytes + deflate_size(symbols), clip.size(1), clip.size(4), clip.size(3)});
    }
    return out;
}

torch::Tensor mock_reference_vjp(const VideoClip& clip, const torch::Tensor& cotangent, const CodecConfig& cfg) {
    auto x = clip.detach().clone().requires_grad_(true);
    auto y = (mock_smooth_path(x, cfg) * cotangent.detach()).sum();
    return torch::autograd::grad({y}, {x})[0];
}

CodecOutput codec_roundtrip(const VideoClip& clip, const CodecConfig& cfg) {
    cfg.validate();
    check_clip(clip, "codec_roundtrip");
    if (clip.size(2) != 3)
        throw DimensionError("codec_roundtrip: expected a 3-channel pixel clip");
    torch::NoGradGuard guard;
    if (cfg.codec == CodecKind::Mock)
        return mock_codec(clip, cfg);
    return external_roundtrip(clip.detach(), cfg);
}

// ---------------------------------------------------------------------------
// Surrogate

SurrogateNetImpl::SurrogateNetImpl(const SurrogateOptions& options) {
    for (int i = 0; i < options.blocks(); ++i)
        blocks_.push_back(register_module(
            "block" + std::to_string(i), DenseBlock(DenseBlockOptions(3, 3)
                                                        .growth(options.growth())
                                                        .temporal(options.temporal())
                                                        .residual(true)
                                                        .zero_init(options.zero_init()))));
}

VideoClip SurrogateNetImpl::forward(const VideoClip& x) {
    VideoClip y = x;
    for (auto& b : blocks_)
        y = b->forward(y);
    return y;
}

VideoClip control_variate(const VideoClip& eta, const VideoClip& phi) {
    if (eta.sizes() != phi.sizes())
        throw DimensionError("control_variate: codec and surrogate outputs differ in shape");
    return eta.detach() + (phi - phi.detach());
}

PassthroughResult cv_passthrough(const VideoClip& x_l, const CodecConfig& cfg, SurrogateNet& surrogate) {
    auto coded = codec_roundtrip(x_l, cfg);
    auto eta = coded.decoded.to(x_l.scalar_type());
    auto phi = surrogate->forward(x_l);
    return {control_variate(eta, phi), eta, phi, std::move(coded.reports)};
}

} // namespace selfc
