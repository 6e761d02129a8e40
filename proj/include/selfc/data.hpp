#pragma once

#include "selfc/tensorblocks.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace selfc {

/// Ordered frame files of one clip.
struct ClipRecord {
    std::vector<std::filesystem::path> frames;
    std::string source_id;
};

/// Collects the image files of a clip folder in lexicographic order. When
/// `length` > 0 the folder must hold at least that many frames and only the
/// first `length` are kept.
ClipRecord clip_record_from_dir(const std::filesystem::path& dir, int64_t length = 0);

/// Loads every frame as 8-bit RGB into a (1,T,3,H,W) clip in [0,1].
VideoClip load_clip(const ClipRecord& record, torch::Dtype dtype = torch::kFloat32);
/// Writes a (1,T,3,H,W) or (T,3,H,W) clip as `frame_0000.png`, ... (8-bit, lossless).
void save_clip(const VideoClip& clip, const std::filesystem::path& dir);

struct AugmentConfig {
    bool flip = true;
    bool rotate90 = true;
    int64_t crop_height = 224;
    int64_t crop_width = 224;
    uint64_t seed = 0;
};

VideoClip flip_horizontal(const VideoClip& clip);
/// Rotates every frame by 90 degrees counter-clockwise `times` times.
VideoClip rotate90(const VideoClip& clip, int times);
/// Random crop, horizontal flip and 90-degree rotation drawn from `cfg.seed`;
/// the same transform is applied to every frame of the clip.
VideoClip augment(const VideoClip& clip, const AugmentConfig& cfg);

/// Framewise Gaussian blur (reflect padding, floor(4*sigma) radius) followed
/// by keeping every k-th row and column starting at 0.
VideoClip blur_downsample(const VideoClip& x, double sigma, int k);

// Corpus layout: per-clip frame folders listed in a manifest of
// `<split>\t<clip-dir>` lines; relative clip dirs resolve against the
// manifest's folder.

struct ManifestEntry {
    std::string split;
    std::filesystem::path clip_dir;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);
/// Records of one split (all splits when `split` is empty).
std::vector<ClipRecord> load_corpus(const std::filesystem::path& manifest, const std::string& split,
                                    int64_t length = 0);

/// Procedural test footage: oriented gratings plus sharp-edged rectangles
/// translating at a constant per-clip velocity. Values lie on the 255 grid.
VideoClip synthetic_clip(int64_t frames, int64_t height, int64_t width, std::mt19937_64& rng,
                         torch::Dtype dtype = torch::kFloat32);
/// Writes `clips` synthetic clips plus `manifest.txt` under `root`, all in `split`.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& root, int clips, int64_t frames,
                                             int64_t height, int64_t width, uint64_t seed,
                                             const std::string& split = "train");

} // namespace selfc
