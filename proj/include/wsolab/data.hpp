#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wsolab/windowing.hpp"

namespace wsolab {

// Synthetic CT phantom: elliptical body over air, sparse bone-like speckle,
// and (for positives) one lesion disk per slice in a narrow HU band.
struct PhantomSpec {
    int image_size = 64;
    double body_hu_min = 30.0, body_hu_max = 54.0;
    double air_hu = -1000.0;
    double bone_hu_min = 300.0, bone_hu_max = 1500.0;
    double bone_density = 0.02;    // fraction of body pixels
    double skull_thickness = 3.0;  // bone rim at the body boundary, px
    double lesion_radius_min = 7.0, lesion_radius_max = 14.0;
    double hem_contrast_min = 30.0, hem_contrast_max = 45.0;  // over local background
    double stone_hu_min = 400.0, stone_hu_max = 900.0;
    double noise_sigma = 5.0;  // HU
    int slices_min = 4, slices_max = 12;
};

enum class Task { Hemorrhage, Stone };

Task task_from_string(std::string_view name);
std::string_view to_string(Task task);

// HU interval lesions are drawn from, before noise.
std::pair<double, double> lesion_hu_band(const PhantomSpec& spec, Task task);

struct Sample {
    HuImage image;
    int label = 0;  // 1 iff a lesion was injected (iff lesion_mask non-empty)
    std::string case_id;
    std::vector<std::uint8_t> lesion_mask;  // per-pixel, in-memory only
};

struct DatasetSplit {
    std::vector<Sample> train, validation, test;
};

std::vector<Sample> generate_dataset(const PhantomSpec& spec, Task task, int n_cases,
                                     double positive_fraction, std::uint64_t seed);

// Case-disjoint split, keyed on sorted case ids so input order is irrelevant.
DatasetSplit split_by_case(const std::vector<Sample>& samples,
                           const std::array<double, 3>& fractions, std::uint64_t seed);

// HURAW1 container: magic "HURAW1", version u16, width u32, height u32,
// rescale slope/intercept f64, then height*width little-endian i16 stored
// values, row-major. HU = slope * raw + intercept.
void write_hu_file(const HuImage& img, const std::filesystem::path& path);
HuImage read_hu_file(const std::filesystem::path& path);

// Writes one HURAW1 file per sample into dir plus manifest.tsv, a
// line-delimited index: <path>\t<label>\t<case_id>. Paths are relative to
// the manifest's directory. Returns the manifest path.
std::filesystem::path write_dataset(const std::vector<Sample>& samples,
                                    const std::filesystem::path& dir);
std::vector<Sample> read_manifest(const std::filesystem::path& manifest_path);

}  // namespace wsolab
