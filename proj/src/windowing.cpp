#include "wsolab/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsolab {

std::string_view to_string(WindowFnKind kind) {
    return kind == WindowFnKind::Linear ? "linear" : "sigmoid";
}

WindowFnKind window_fn_from_string(std::string_view name) {
    if (name == "linear") return WindowFnKind::Linear;
    if (name == "sigmoid") return WindowFnKind::Sigmoid;
    throw std::invalid_argument("unknown window function '" + std::string(name) +
                                "' (expected linear or sigmoid)");
}

void validate(const WindowSetting& s) {
    if (!std::isfinite(s.level) || !std::isfinite(s.width))
        throw std::invalid_argument("window setting must be finite");
    if (s.width <= 0.0)
        throw std::invalid_argument("window width must be positive");
}

void validate(const DisplayRange& d) {
    if (!std::isfinite(d.u) || !std::isfinite(d.eps))
        throw std::invalid_argument("display range must be finite");
    if (d.u <= 0.0)
        throw std::invalid_argument("display upper limit must be positive");
    if (d.eps <= 0.0 || d.eps >= d.u / 2.0)
        throw std::invalid_argument("display margin must satisfy 0 < eps < u/2");
}

double window_slope(WindowFnKind kind, const WindowSetting& s, const DisplayRange& d) {
    if (kind == WindowFnKind::Linear) return d.u / s.width;
    return (2.0 / s.width) * std::log(d.u / d.eps - 1.0);
}

double window_offset(WindowFnKind kind, const WindowSetting& s, const DisplayRange& d) {
    if (kind == WindowFnKind::Linear)
        return -(d.u / s.width) * (s.level - s.width / 2.0);
    return (-2.0 * s.level / s.width) * std::log(d.u / d.eps - 1.0);
}

namespace {
void require_finite_hu(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite HU value");
}
}  // namespace

double linear_window(double x, const WindowSetting& s, const DisplayRange& d) {
    validate(s);
    validate(d);
    require_finite_hu(x);
    const double w = window_slope(WindowFnKind::Linear, s, d);
    const double b = window_offset(WindowFnKind::Linear, s, d);
    return std::clamp(w * x + b, 0.0, d.u);
}

double sigmoid_window(double x, const WindowSetting& s, const DisplayRange& d) {
    validate(s);
    validate(d);
    require_finite_hu(x);
    const double w = window_slope(WindowFnKind::Sigmoid, s, d);
    const double b = window_offset(WindowFnKind::Sigmoid, s, d);
    return d.u / (1.0 + std::exp(-(w * x + b)));
}

double apply_window(double x, WindowFnKind kind, const WindowSetting& s, const DisplayRange& d) {
    return kind == WindowFnKind::Linear ? linear_window(x, s, d) : sigmoid_window(x, s, d);
}

WindowSetting preset(std::string_view name) {
    if (name == "brain") return {50.0, 100.0};
    if (name == "subdural") return {50.0, 130.0};
    if (name == "bone") return {300.0, 1500.0};
    if (name == "abdomen") return {40.0, 400.0};
    throw std::invalid_argument("unknown preset '" + std::string(name) +
                                "' (valid presets: brain, subdural, bone, abdomen)");
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"brain", "subdural", "bone", "abdomen"};
    return names;
}

DisplayImage render_display(const HuImage& img, WindowFnKind kind,
                            const WindowSetting& s, const DisplayRange& d) {
    validate(s);
    validate(d);
    if (img.height <= 0 || img.width <= 0 ||
        img.values.size() != static_cast<std::size_t>(img.height) * img.width)
        throw std::invalid_argument("HU image has inconsistent dimensions");

    const double w = window_slope(kind, s, d);
    const double b = window_offset(kind, s, d);

    DisplayImage out;
    out.height = img.height;
    out.width = img.width;
    out.gray.resize(img.values.size());
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        const double x = img.values[i];
        require_finite_hu(x);
        double g;
        if (kind == WindowFnKind::Linear)
            g = std::clamp(w * x + b, 0.0, d.u);
        else
            g = d.u / (1.0 + std::exp(-(w * x + b)));
        g = std::round(g);  // half away from zero
        out.gray[i] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
    }
    return out;
}

}  // namespace wsolab
