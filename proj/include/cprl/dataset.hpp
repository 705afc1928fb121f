#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cprl {

struct Sample {
    std::vector<double> image;  // row-major C*H*W, values in [0,1]
    double label = 0.0;         // quality in [0,1], 1 = undistorted
    std::size_t scene_id = 0;
    std::string distortion = "none";
    std::size_t level = 0;
};

struct Dataset {
    std::size_t channels = 1, height = 32, width = 32;
    std::vector<Sample> samples;

    std::size_t pixel_count() const { return channels * height * width; }
};

struct SplitSpec {
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_scenes;
    std::vector<std::size_t> test_scenes;
};

/// Seeded scenes (gradient + checkerboard + band-limited noise mixtures),
/// three distortion families at `levels` strengths each, plus the clean
/// reference per scene. Labels decay exponentially with level, rescaled so
/// level 0 -> 1 and the deepest level -> 0 within each family.
Dataset generate(std::size_t scene_count, std::size_t levels, std::uint64_t seed,
                 std::size_t side = 32);

/// Scene-disjoint 4:1 assignment; at least one scene lands in each split.
SplitSpec make_split(const Dataset& ds, std::uint64_t seed);
std::pair<Dataset, Dataset> apply_split(const Dataset& ds, const SplitSpec& spec);
void save_split(const std::string& path, const SplitSpec& spec);
SplitSpec load_split(const std::string& path);

/// Archive layout: meta.json (dims, count, optional label range),
/// manifest.csv (filename,label,scene_id), one raw little-endian f64 blob
/// per image.
void export_archive(const Dataset& ds, const std::string& dir);

/// Loads an archive, bilinear-resizes + center-crops to the target size,
/// min-max normalizes labels into [0,1]. Malformed rows, missing blobs and
/// degenerate label columns are reported with their manifest line number.
Dataset ingest(const std::string& dir, std::size_t target_h, std::size_t target_w);

}  // namespace cprl
