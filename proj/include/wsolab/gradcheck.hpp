#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wsolab/nn.hpp"
#include "wsolab/tensor.hpp"
#include "wsolab/wso.hpp"

namespace wsolab {

// A small model instance (optional WSO front end plus DeskNet) with an
// input batch and labels, used for checking analytic gradients against
// central finite differences of the BCE loss.
struct GradCheckConfig {
    std::optional<WsoLayer> wso;
    DeskNet net;
    Tensor4 input;  // raw HU if wso is present, [0,1] otherwise
    std::vector<double> labels;
};

// Central-difference step sizes. The WSO slope step is small because raw
// HU inputs multiply it before any bounded activation.
struct StepSchedule {
    double wso_w = 1e-6;
    double wso_b = 1e-4;
    double net = 1e-4;
};

// Perturbs every parameter (WSO and CNN) and returns the worst relative
// error against the analytic backward pass. Denominators below 1e-8 fall
// back to absolute error.
double finite_diff_check(const GradCheckConfig& config, const StepSchedule& steps = {});

// Seeded random configuration at the given spatial size, resampled until
// no activation sits close enough to a ReLU/clamp kink or pooling tie for
// the finite-difference step to straddle it.
GradCheckConfig make_gradcheck_config(std::uint64_t seed, WindowFnKind kind, bool with_wso,
                                      int channels = 2, int hw = 8, int batch = 2);

}  // namespace wsolab
