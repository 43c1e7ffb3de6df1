#pragma once

#include <utility>
#include <vector>

#include "wsolab/rng.hpp"
#include "wsolab/tensor.hpp"

namespace wsolab {

// Fixed small CNN: conv 3x3 (C_in -> 8, pad 1), ReLU, 2x2 max-pool,
// conv 3x3 (8 -> 16, pad 1), ReLU, 2x2 max-pool, global average pool,
// dense 16 -> 1 logit.
struct DeskNet {
    static constexpr int kConv1Out = 8;
    static constexpr int kConv2Out = 16;

    int in_channels = 1;
    std::vector<double> conv1_w;  // [8][C_in][3][3]
    std::vector<double> conv1_b;  // [8]
    std::vector<double> conv2_w;  // [16][8][3][3]
    std::vector<double> conv2_b;  // [16]
    std::vector<double> fc_w;     // [16]
    std::vector<double> fc_b;     // [1]
};

// Gradients share the parameter layout.
using DeskNetGrads = DeskNet;

// Weights uniform in +/- sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
DeskNet init_desknet(int in_channels, Rng& rng);

DeskNet zero_like(const DeskNet& net);

// Per-layer inputs and pooling argmax positions cached for the backward pass.
struct ForwardTape {
    Tensor4 input;
    Tensor4 z1;                   // conv1 pre-activation
    Tensor4 a1;                   // post-ReLU conv1
    std::vector<int> argmax1;     // flat index into the a1 plane, per pooled cell
    Tensor4 p1;
    Tensor4 z2;
    Tensor4 a2;
    std::vector<int> argmax2;
    Tensor4 p2;
    std::vector<double> gap;      // [N][16]
    double param_checksum = 0.0;
};

double param_checksum(const DeskNet& net);

std::pair<std::vector<double>, ForwardTape> desknet_forward(const DeskNet& net, const Tensor4& input);

// Reverse-mode gradients of the full composition; the returned tensor is
// dL/d(input) with the input's shape.
std::pair<DeskNetGrads, Tensor4> desknet_backward(const DeskNet& net, const ForwardTape& tape,
                                                  const std::vector<double>& dlogits);

// Numerically stable sigmoid cross-entropy, mean over the batch.
std::pair<double, std::vector<double>> bce_loss(const std::vector<double>& logits,
                                                const std::vector<double>& labels);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace wsolab
