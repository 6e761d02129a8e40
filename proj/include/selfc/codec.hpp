#pragma once

#include "selfc/tensorblocks.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace selfc {

enum class CodecKind { Hevc, Avc, Mock };
enum class CodecMode { Default, ZeroLatency };
enum class RateControl { Qp, Crf };

CodecKind parse_codec_kind(const std::string& s);
CodecMode parse_codec_mode(const std::string& s);
RateControl parse_rate_control(const std::string& s);
std::string to_string(CodecKind kind);
std::string to_string(CodecMode mode);

struct CodecConfig {
    CodecKind codec = CodecKind::Hevc;
    CodecMode mode = CodecMode::Default;
    int quality = 17;
    RateControl rate_control = RateControl::Qp;
    /// Lossless storage: RGB planes are piped unconverted and decoded bit-exactly.
    bool lossless = false;
    std::string pix_fmt = "yuv444p";
    int fps = 50;
    std::string preset = "veryfast";

    /// Quality values drawn during compression training.
    static constexpr std::array<int, 4> kTrainingQualities{11, 13, 17, 21};

    void validate() const;
};

struct BitstreamReport {
    int64_t encoded_bytes = 0;
    int64_t frame_count = 0;
    int64_t width = 0;
    int64_t height = 0;
};

struct CodecOutput {
    VideoClip decoded;                    ///< (B,T,3,H,W) on the 255-level grid
    std::vector<BitstreamReport> reports; ///< one per batch element

    int64_t total_bytes() const;
};

// ---------------------------------------------------------------------------
// Raw frames: planar 8-bit, frame-major (frame 0 planes 0..2, frame 1, ...).

enum class PlaneColor { Rgb, Bt601YCbCr };

/// Serializes one clip (T,3,H,W) or (1,T,3,H,W) after rounding to 8 bits.
std::vector<uint8_t> serialize_frames(const torch::Tensor& clip, PlaneColor color);
/// Parses `frames` frames of HxW back to a (1,T,3,H,W) float clip.
VideoClip parse_frames(std::span<const uint8_t> bytes, int64_t frames, int64_t height, int64_t width,
                       PlaneColor color, torch::Dtype dtype = torch::kFloat32);

// ---------------------------------------------------------------------------
// External encoder.

/// Binary named by $SELFC_FFMPEG, otherwise `ffmpeg` on $PATH. Throws
/// EnvironmentError when neither resolves to an executable.
std::filesystem::path find_encoder();
bool encoder_available();

std::vector<std::string> encoder_command(const CodecConfig& cfg, const std::string& binary, int64_t width,
                                         int64_t height, const std::string& raw_path,
                                         const std::string& bitstream_path);
std::vector<std::string> decoder_command(const CodecConfig& cfg, const std::string& binary,
                                         const std::string& bitstream_path, const std::string& raw_path);
/// Shell-quoted rendering of an argument vector, for logs and diagnostics.
std::string render_command(const std::vector<std::string>& argv);

// ---------------------------------------------------------------------------
// Built-in mock codec: Gaussian blur (sigma = 1) followed by uniform
// quantization with step 2^((Q - 4) / 6) / 255, decoded back to 8 bits.
// Lossless mode skips the blur and uses the 8-bit step. Encoded size is the
// deflated size of the horizontally DPCM-coded quantization indices.

constexpr double kMockBlurSigma = 1.0;

double mock_quant_step(int quality);
CodecOutput mock_codec(const VideoClip& clip, const CodecConfig& cfg);
/// The differentiable part of the mock (its blur, or identity when lossless).
VideoClip mock_smooth_path(const VideoClip& clip, const CodecConfig& cfg);
/// Exact vector-Jacobian product of the mock's smooth path.
torch::Tensor mock_reference_vjp(const VideoClip& clip, const torch::Tensor& cotangent,
                                 const CodecConfig& cfg);

/// Encodes and decodes every clip of the batch independently. Carries no gradient.
CodecOutput codec_roundtrip(const VideoClip& clip, const CodecConfig& cfg);

// ---------------------------------------------------------------------------
// Surrogate perturbator and the control-variates pass-through.

struct SurrogateOptions {
    TORCH_ARG(int, blocks) = 6;
    TORCH_ARG(int64_t, growth) = 16;
    TORCH_ARG(bool, temporal) = true;
    TORCH_ARG(bool, zero_init) = true;
};

/// Stack of residual 3->3 channel Dense2D-T blocks standing in for the codec
/// in the backward pass.
class SurrogateNetImpl : public torch::nn::Module {
public:
    explicit SurrogateNetImpl(const SurrogateOptions& options = {});

    VideoClip forward(const VideoClip& x);

private:
    std::vector<DenseBlock> blocks_;
};
TORCH_MODULE(SurrogateNet);

/// Value of `eta`, gradient of `phi`: eta + phi - stopgrad(phi).
VideoClip control_variate(const VideoClip& eta, const VideoClip& phi);

struct PassthroughResult {
    VideoClip output; ///< equals the codec's decoded clip; differentiates like phi
    VideoClip eta;    ///< detached codec output
    VideoClip phi;    ///< surrogate output (attached to the graph)
    std::vector<BitstreamReport> reports;
};

PassthroughResult cv_passthrough(const VideoClip& x_l, const CodecConfig& cfg, SurrogateNet& surrogate);

} // namespace selfc
