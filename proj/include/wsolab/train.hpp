#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsolab/data.hpp"
#include "wsolab/nn.hpp"
#include "wsolab/optim.hpp"
#include "wsolab/wso.hpp"

namespace wsolab {

enum class InputMode { FullRange, FixedWindow, Wso };

// One row of the ten-model grid: input handling, optional window function,
// and the presets used either as fixed windows or as WSO initialization.
struct ExperimentVariant {
    InputMode mode = InputMode::FullRange;
    WindowFnKind kind = WindowFnKind::Linear;  // meaningful for Wso only
    std::vector<WindowSetting> settings;       // fixed windows or WSO init
    std::string name;                          // stable id, e.g. wso_sigmoid_s1s2
    std::string windowing_function;            // report column; "-" for non-WSO
    std::string initialization;                // report column; "-" for full range

    int channel_count() const {
        return mode == InputMode::FullRange ? 1 : static_cast<int>(settings.size());
    }
};

// The ten variants in the report's row order for the given task
// (S1/S2 = brain/subdural for hemorrhage, bone/abdomen for stone).
std::vector<ExperimentVariant> table_variants(Task task);

// Lookup by stable name or 0-based row index given as a string.
ExperimentVariant variant_by_name(Task task, const std::string& id);

// full_range -> (HU + 1024) / 4095 clamped to [0, 1];
// fixed windows -> closed-form windowing / u per setting;
// wso -> raw HU, single channel.
Tensor4 prepare_input(const ExperimentVariant& variant, const HuImage& img,
                      const DisplayRange& d = {});

struct TrainedModel {
    ExperimentVariant variant;
    DisplayRange d;
    DeskNet net;
    std::optional<WsoLayer> wso;
    int selected_epoch = -1;
    double selection_val_loss = 0.0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_ap = 0.0;
    double val_auc = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

std::pair<TrainedModel, TrainHistory> train_model(const ExperimentVariant& variant,
                                                  const DatasetSplit& split,
                                                  const TrainHyper& hyper, std::uint64_t seed);

// Scores are sigmoid(logit) per slice; returns (AP, AUC).
std::pair<double, double> evaluate(const TrainedModel& model, std::span<const Sample> samples);

std::vector<double> score_samples(const TrainedModel& model, std::span<const Sample> samples);

struct GridRow {
    std::string variant;
    std::string windowing_function;
    std::string initialization;
    double ap = 0.0;
    double auc = 0.0;
    int selected_epoch = -1;
    std::string learned_windows;  // "WL1:WW1;WL2:WW2", empty for non-WSO rows
    bool ok = false;
    std::string error;
};

// Trains and evaluates all ten variants with per-variant seeds seed + index.
// Per-variant failures are recorded in the row and the grid continues.
// Parallelism is capped by the WSO_LAB_THREADS environment variable
// (default 1); results are deterministic per variant either way.
std::vector<GridRow> run_grid(Task task, const DatasetSplit& split, const TrainHyper& hyper,
                              std::uint64_t seed);

void write_grid_csv(const std::vector<GridRow>& rows, const std::filesystem::path& path);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

// Checkpoint: magic "WSOCKPT1", version, variant descriptor, display-range
// constants, then named little-endian f64 parameter sections.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// Locale-independent formatting with 6 significant digits.
std::string fmt6(double v);

}  // namespace wsolab
