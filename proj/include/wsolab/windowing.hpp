#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wsolab {

// Clinical window: HU value mapped to the display center, and the HU span
// mapped across the full gray range.
struct WindowSetting {
    double level = 0.0;  // WL, HU
    double width = 0.0;  // WW, HU
};

// Output gray range of the window functions. u is the upper limit, eps the
// sigmoid margin between the asymptotes and the window start/end values.
struct DisplayRange {
    double u = 255.0;
    double eps = 1.0;
};

enum class WindowFnKind { Linear, Sigmoid };

std::string_view to_string(WindowFnKind kind);
WindowFnKind window_fn_from_string(std::string_view name);

// 2-D raster of Hounsfield-unit values with DICOM-style rescale metadata.
struct HuImage {
    int height = 0, width = 0;
    std::vector<double> values;  // row-major HU
    double rescale_slope = 1.0;
    double rescale_intercept = 0.0;
    std::string case_id;

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// 8-bit quantized render of a windowed image.
struct DisplayImage {
    int height = 0, width = 0;
    std::vector<std::uint8_t> gray;
};

void validate(const WindowSetting& s);
void validate(const DisplayRange& d);

// Affine coefficients (w, b) of the window function's pre-activation stage.
double window_slope(WindowFnKind kind, const WindowSetting& s, const DisplayRange& d);
double window_offset(WindowFnKind kind, const WindowSetting& s, const DisplayRange& d);

// clamp(W x + b, 0, u)
double linear_window(double x, const WindowSetting& s, const DisplayRange& d);

// u / (1 + exp(-(W x + b)))
double sigmoid_window(double x, const WindowSetting& s, const DisplayRange& d);

double apply_window(double x, WindowFnKind kind, const WindowSetting& s, const DisplayRange& d);

// Named clinical presets: brain, subdural, bone, abdomen.
WindowSetting preset(std::string_view name);
const std::vector<std::string>& preset_names();

// Per-pixel windowing followed by round-half-away-from-zero, clamped to
// [0, 255]. Quantization exists only here, never in the training path.
DisplayImage render_display(const HuImage& img, WindowFnKind kind,
                            const WindowSetting& s, const DisplayRange& d);

}  // namespace wsolab
