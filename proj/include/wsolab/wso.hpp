#pragma once

#include <utility>
#include <vector>

#include "wsolab/tensor.hpp"
#include "wsolab/windowing.hpp"

namespace wsolab {

// One trainable window: slope (gray levels per HU) and offset (gray levels).
struct WsoChannel {
    double w = 0.0;
    double b = 0.0;
};

// Per-channel 1x1 affine transform over raw HU input followed by a bounded
// activation (clamped ramp or scaled sigmoid). All channels share the
// activation kind and display range.
struct WsoLayer {
    WindowFnKind kind = WindowFnKind::Linear;
    DisplayRange d;
    std::vector<WsoChannel> channels;
};

struct WsoGradients {
    std::vector<double> dw;
    std::vector<double> db;
};

// One channel per setting, coefficients from the closed-form window
// formulas for the given kind.
WsoLayer init_from_settings(WindowFnKind kind, const DisplayRange& d,
                            const std::vector<WindowSetting>& settings);

// batch is N x 1 x H x W raw HU; output is N x C x H x W, activation
// divided by u so downstream input lies in [0, 1].
Tensor4 wso_forward(const WsoLayer& layer, const Tensor4& batch);

// Gradients summed over batch and pixels per channel; the returned tensor
// is dL/d(input) with the batch's shape.
std::pair<WsoGradients, Tensor4> wso_backward(const WsoLayer& layer, const Tensor4& batch,
                                              const Tensor4& upstream);

// Inverse of init_from_settings; throws if a channel's slope degenerated
// to w <= 0 during training.
std::vector<WindowSetting> settings_from_layer(const WsoLayer& layer);

}  // namespace wsolab
