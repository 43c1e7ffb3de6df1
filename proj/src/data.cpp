#include "wsolab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "wsolab/errors.hpp"
#include "wsolab/rng.hpp"

namespace wsolab {

namespace {

constexpr char kMagic[6] = {'H', 'U', 'R', 'A', 'W', '1'};
constexpr std::uint16_t kFormatVersion = 1;

void validate_spec(const PhantomSpec& spec) {
    if (spec.image_size < 16) throw std::invalid_argument("phantom image size too small");
    if (spec.body_hu_min >= spec.body_hu_max || spec.bone_hu_min >= spec.bone_hu_max ||
        spec.stone_hu_min >= spec.stone_hu_max || spec.hem_contrast_min >= spec.hem_contrast_max)
        throw std::invalid_argument("phantom spec has an inverted HU band");
    if (spec.slices_min < 1 || spec.slices_min > spec.slices_max)
        throw std::invalid_argument("phantom spec has an invalid slice-count range");
}

}  // namespace

Task task_from_string(std::string_view name) {
    if (name == "hemorrhage") return Task::Hemorrhage;
    if (name == "stone") return Task::Stone;
    throw std::invalid_argument("unknown task '" + std::string(name) +
                                "' (expected hemorrhage or stone)");
}

std::string_view to_string(Task task) {
    return task == Task::Hemorrhage ? "hemorrhage" : "stone";
}

std::pair<double, double> lesion_hu_band(const PhantomSpec& spec, Task task) {
    if (task == Task::Hemorrhage)
        return {spec.body_hu_min + spec.hem_contrast_min, spec.body_hu_max + spec.hem_contrast_max};
    return {spec.stone_hu_min, spec.stone_hu_max};
}

std::vector<Sample> generate_dataset(const PhantomSpec& spec, Task task, int n_cases,
                                     double positive_fraction, std::uint64_t seed) {
    validate_spec(spec);
    if (n_cases < 1) throw std::invalid_argument("need at least one case");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
        throw std::invalid_argument("positive_fraction must lie in [0, 1]");

    Rng rng(seed);
    const int S = spec.image_size;

    const int n_pos = static_cast<int>(std::lround(n_cases * positive_fraction));
    std::vector<int> case_label(n_cases, 0);
    std::fill(case_label.begin(), case_label.begin() + n_pos, 1);
    rng.shuffle(case_label);

    std::vector<Sample> out;
    for (int ci = 0; ci < n_cases; ++ci) {
        char cid[32];
        std::snprintf(cid, sizeof cid, "%s%04d", task == Task::Hemorrhage ? "hem" : "sto", ci);
        const int positive = case_label[ci];
        const int n_slices = static_cast<int>(rng.uniform_int(spec.slices_min, spec.slices_max));

        // per-case body ellipse
        const double cy = S / 2.0, cx = S / 2.0;
        const double ry = rng.uniform(0.34 * S, 0.44 * S);
        const double rx = rng.uniform(0.36 * S, 0.46 * S);
        auto inside_body = [&](double y, double x, double shrink) {
            const double dy = (y - cy) / (ry - shrink), dx = (x - cx) / (rx - shrink);
            return dy * dy + dx * dx <= 1.0;
        };

        for (int si = 0; si < n_slices; ++si) {
            HuImage img;
            img.height = S;
            img.width = S;
            img.rescale_slope = 1.0;
            img.rescale_intercept = -1024.0;
            img.case_id = cid;
            img.values.resize(static_cast<std::size_t>(S) * S);

            const double bg = rng.uniform(spec.body_hu_min + 10.0, spec.body_hu_max - 10.0);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    img.at(y, x) = inside_body(y, x, 0.0) ? bg : spec.air_hu;

            // skull-like bone rim; its HU drifts a lot from slice to slice,
            // which dominates the raw dynamic range but saturates under any
            // soft-tissue window
            const double skull_hu = rng.uniform(spec.bone_hu_min, spec.bone_hu_max);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    if (inside_body(y, x, 0.0) && !inside_body(y, x, spec.skull_thickness))
                        img.at(y, x) = skull_hu;

            // bone-like speckle in the body
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    if (inside_body(y, x, 0.0) && rng.uniform() < spec.bone_density)
                        img.at(y, x) = rng.uniform(spec.bone_hu_min, spec.bone_hu_max);

            std::vector<std::uint8_t> mask;
            if (positive) {
                mask.assign(img.values.size(), 0);
                const double r = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
                double ly, lx;
                do {
                    ly = rng.uniform(cy - ry, cy + ry);
                    lx = rng.uniform(cx - rx, cx + rx);
                } while (!inside_body(ly, lx, r + 2.0));
                const double lesion_hu =
                    task == Task::Hemorrhage
                        ? bg + rng.uniform(spec.hem_contrast_min, spec.hem_contrast_max)
                        : rng.uniform(spec.stone_hu_min, spec.stone_hu_max);
                for (int y = 0; y < S; ++y)
                    for (int x = 0; x < S; ++x) {
                        const double dy = y - ly, dx = x - lx;
                        if (dy * dy + dx * dx <= r * r) {
                            img.at(y, x) = lesion_hu;
                            mask[static_cast<std::size_t>(y) * S + x] = 1;
                        }
                    }
            }

            for (auto& v : img.values) v += rng.normal(0.0, spec.noise_sigma);

            Sample s;
            s.image = std::move(img);
            s.label = positive;
            s.case_id = cid;
            s.lesion_mask = std::move(mask);
            out.push_back(std::move(s));
        }
    }
    return out;
}

DatasetSplit split_by_case(const std::vector<Sample>& samples,
                           const std::array<double, 3>& fractions, std::uint64_t seed) {
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

    std::set<std::string> case_set;
    for (const auto& s : samples) case_set.insert(s.case_id);
    std::vector<std::string> cases(case_set.begin(), case_set.end());  // sorted

    Rng rng(seed);
    rng.shuffle(cases);

    const auto n = static_cast<std::int64_t>(cases.size());
    const auto n_train = std::llround(n * fractions[0]);
    const auto n_val = std::llround(n * fractions[1]);
    const auto n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::invalid_argument("too few cases for three non-empty splits");

    std::map<std::string, int> assignment;  // 0 train, 1 val, 2 test
    for (std::int64_t i = 0; i < n; ++i)
        assignment[cases[static_cast<std::size_t>(i)]] = i < n_train ? 0 : i < n_train + n_val ? 1 : 2;

    DatasetSplit split;
    for (const auto& s : samples) {
        switch (assignment.at(s.case_id)) {
            case 0: split.train.push_back(s); break;
            case 1: split.validation.push_back(s); break;
            default: split.test.push_back(s); break;
        }
    }
    return split;
}

void write_hu_file(const HuImage& img, const std::filesystem::path& path) {
    if (img.rescale_slope == 0.0) throw std::invalid_argument("rescale slope must be non-zero");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic, sizeof kMagic);
    binio::write_le<std::uint16_t>(os, kFormatVersion);
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.width));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.height));
    binio::write_le<double>(os, img.rescale_slope);
    binio::write_le<double>(os, img.rescale_intercept);
    for (double hu : img.values) {
        const double raw = std::round((hu - img.rescale_intercept) / img.rescale_slope);
        if (raw < -32768.0 || raw > 32767.0)
            throw std::invalid_argument("HU value not representable as int16 under the given rescale");
        binio::write_le<std::int16_t>(os, static_cast<std::int16_t>(raw));
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

HuImage read_hu_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[6];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("bad magic in '" + path.string() + "': not a HURAW1 file");
    const auto version = binio::read_le<std::uint16_t>(is, "version");
    if (version != kFormatVersion)
        throw IoError("unsupported HURAW1 version " + std::to_string(version));
    HuImage img;
    img.width = static_cast<int>(binio::read_le<std::uint32_t>(is, "width"));
    img.height = static_cast<int>(binio::read_le<std::uint32_t>(is, "height"));
    img.rescale_slope = binio::read_le<double>(is, "rescale slope");
    img.rescale_intercept = binio::read_le<double>(is, "rescale intercept");
    if (img.width <= 0 || img.height <= 0) throw IoError("invalid dimensions in HURAW1 header");
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
    img.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto raw = binio::read_le<std::int16_t>(is, "pixel payload");
        img.values[i] = img.rescale_slope * raw + img.rescale_intercept;
    }
    return img;
}

std::filesystem::path write_dataset(const std::vector<Sample>& samples,
                                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto manifest_path = dir / "manifest.tsv";
    std::ofstream mf(manifest_path);
    if (!mf) throw IoError("cannot open '" + manifest_path.string() + "' for writing");
    std::map<std::string, int> slice_counter;
    for (const auto& s : samples) {
        const int idx = slice_counter[s.case_id]++;
        char name[64];
        std::snprintf(name, sizeof name, "%s_%03d.huraw", s.case_id.c_str(), idx);
        write_hu_file(s.image, dir / name);
        mf << name << '\t' << s.label << '\t' << s.case_id << '\n';
    }
    if (!mf) throw IoError("write failed for '" + manifest_path.string() + "'");
    return manifest_path;
}

std::vector<Sample> read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot open '" + manifest_path.string() + "' for reading");
    const auto dir = manifest_path.parent_path();
    std::vector<Sample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string path, label, case_id;
        if (!std::getline(ls, path, '\t') || !std::getline(ls, label, '\t') ||
            !std::getline(ls, case_id))
            throw IoError("malformed manifest line " + std::to_string(lineno));
        Sample s;
        s.image = read_hu_file(dir / path);
        s.label = std::stoi(label);
        if (s.label != 0 && s.label != 1)
            throw IoError("manifest label must be 0 or 1 on line " + std::to_string(lineno));
        s.case_id = case_id;
        s.image.case_id = case_id;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace wsolab
