#include "wsolab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsolab {

namespace {

constexpr int kC1 = DeskNet::kConv1Out;
constexpr int kC2 = DeskNet::kConv2Out;

void fill_uniform(std::vector<double>& v, double bound, Rng& rng) {
    for (auto& x : v) x = rng.uniform(-bound, bound);
}

// Adds one 3x3 kernel applied to one padded input plane into o, one sweep
// over the rows with all nine taps fused (this is the training hot loop).
void accumulate_conv_plane(const double* __restrict__ ip, const double* __restrict__ wk, int H,
                           int W, double* __restrict__ o, const double* __restrict__ zero_row) {
    const double w00 = wk[0], w01 = wk[1], w02 = wk[2];
    const double w10 = wk[3], w11 = wk[4], w12 = wk[5];
    const double w20 = wk[6], w21 = wk[7], w22 = wk[8];
    for (int y = 0; y < H; ++y) {
        const double* r0 = y > 0 ? ip + static_cast<std::size_t>(y - 1) * W : zero_row;
        const double* r1 = ip + static_cast<std::size_t>(y) * W;
        const double* r2 = y < H - 1 ? ip + static_cast<std::size_t>(y + 1) * W : zero_row;
        double* orow = o + static_cast<std::size_t>(y) * W;
        orow[0] += w01 * r0[0] + w02 * r0[1] + w11 * r1[0] + w12 * r1[1] + w21 * r2[0] +
                   w22 * r2[1];
        for (int x = 1; x < W - 1; ++x)
            orow[x] += w00 * r0[x - 1] + w01 * r0[x] + w02 * r0[x + 1] + w10 * r1[x - 1] +
                       w11 * r1[x] + w12 * r1[x + 1] + w20 * r2[x - 1] + w21 * r2[x] +
                       w22 * r2[x + 1];
        const int x = W - 1;
        orow[x] += w00 * r0[x - 1] + w01 * r0[x] + w10 * r1[x - 1] + w11 * r1[x] +
                   w20 * r2[x - 1] + w21 * r2[x];
    }
}

// 3x3 convolution, padding 1, same spatial size.
void conv3x3_forward(const Tensor4& in, const std::vector<double>& weights,
                     const std::vector<double>& bias, int cout, Tensor4& out) {
    const int H = in.h, W = in.w, cin = in.c;
    const std::vector<double> zero_row(static_cast<std::size_t>(W), 0.0);
    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < cout; ++co) {
            double* o = out.plane(n, co);
            std::fill(o, o + out.plane_size(), bias[co]);
            for (int ci = 0; ci < cin; ++ci) {
                const double* ip = in.plane(n, ci);
                const double* wk = weights.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
                accumulate_conv_plane(ip, wk, H, W, o, zero_row.data());
            }
        }
    }
}

// Accumulates weight/bias gradients and the input gradient for conv3x3.
void conv3x3_backward(const Tensor4& in, const std::vector<double>& weights, int cout,
                      const Tensor4& dout, std::vector<double>& dweights,
                      std::vector<double>& dbias, Tensor4& din) {
    const int H = in.h, W = in.w, cin = in.c;
    const std::vector<double> zero_row(static_cast<std::size_t>(W), 0.0);
    for (int n = 0; n < in.n; ++n) {
        for (int co = 0; co < cout; ++co) {
            const double* dop = dout.plane(n, co);
            double db = 0.0;
            for (std::size_t i = 0; i < dout.plane_size(); ++i) db += dop[i];
            dbias[co] += db;
            for (int ci = 0; ci < cin; ++ci) {
                const double* ip = in.plane(n, ci);
                const double* wk = weights.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
                double* dwk = dweights.data() + (static_cast<std::size_t>(co) * cin + ci) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    const int dy = ky - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dx = kx - 1;
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        // eight fixed lanes keep the reduction order
                        // deterministic while breaking the FMA latency chain
                        double acc[8] = {};
                        for (int y = y0; y < y1; ++y) {
                            const double* __restrict__ irow =
                                ip + static_cast<std::size_t>(y + dy) * W + dx;
                            const double* __restrict__ dorow =
                                dop + static_cast<std::size_t>(y) * W;
                            int x = x0;
                            for (; x + 8 <= x1; x += 8)
                                for (int j = 0; j < 8; ++j) acc[j] += dorow[x + j] * irow[x + j];
                            for (int j = 0; x < x1; ++x, ++j) acc[j] += dorow[x] * irow[x];
                        }
                        dwk[ky * 3 + kx] += ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                                            ((acc[4] + acc[5]) + (acc[6] + acc[7]));
                    }
                }
                // the input gradient of a zero-padded convolution is the
                // upstream convolved with the 180-degree-rotated kernel
                double flipped[9];
                for (int k = 0; k < 9; ++k) flipped[k] = wk[8 - k];
                accumulate_conv_plane(dop, flipped, H, W, din.plane(n, ci), zero_row.data());
            }
        }
    }
}

void relu_inplace(Tensor4& t) {
    for (auto& x : t.v)
        if (x < 0.0) x = 0.0;
}

// 2x2 max-pool, stride 2. Ties broken to the first element in row-major
// order within each window.
void maxpool2_forward(const Tensor4& in, Tensor4& out, std::vector<int>& argmax) {
    const int H = in.h, W = in.w;
    const int Ho = H / 2, Wo = W / 2;
    argmax.resize(static_cast<std::size_t>(in.n) * in.c * Ho * Wo);
    std::size_t ai = 0;
    for (int n = 0; n < in.n; ++n) {
        for (int c = 0; c < in.c; ++c) {
            const double* ip = in.plane(n, c);
            double* o = out.plane(n, c);
            for (int y = 0; y < Ho; ++y) {
                for (int x = 0; x < Wo; ++x) {
                    const int base = (2 * y) * W + 2 * x;
                    int best = base;
                    double bv = ip[base];
                    const int cands[3] = {base + 1, base + W, base + W + 1};
                    for (int k : cands) {
                        if (ip[k] > bv) {
                            bv = ip[k];
                            best = k;
                        }
                    }
                    o[static_cast<std::size_t>(y) * Wo + x] = bv;
                    argmax[ai++] = best;
                }
            }
        }
    }
}

void maxpool2_backward(const Tensor4& dout, const std::vector<int>& argmax, Tensor4& din) {
    std::size_t ai = 0;
    for (int n = 0; n < dout.n; ++n) {
        for (int c = 0; c < dout.c; ++c) {
            const double* dop = dout.plane(n, c);
            double* dip = din.plane(n, c);
            for (std::size_t i = 0; i < dout.plane_size(); ++i) dip[argmax[ai++]] += dop[i];
        }
    }
}

}  // namespace

DeskNet init_desknet(int in_channels, Rng& rng) {
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
    DeskNet net;
    net.in_channels = in_channels;
    net.conv1_w.resize(static_cast<std::size_t>(kC1) * in_channels * 9);
    net.conv1_b.assign(kC1, 0.0);
    net.conv2_w.resize(static_cast<std::size_t>(kC2) * kC1 * 9);
    net.conv2_b.assign(kC2, 0.0);
    net.fc_w.resize(kC2);
    net.fc_b.assign(1, 0.0);
    fill_uniform(net.conv1_w, std::sqrt(6.0 / (in_channels * 9 + kC1 * 9)), rng);
    fill_uniform(net.conv2_w, std::sqrt(6.0 / (kC1 * 9 + kC2 * 9)), rng);
    fill_uniform(net.fc_w, std::sqrt(6.0 / (kC2 + 1)), rng);
    return net;
}

DeskNet zero_like(const DeskNet& net) {
    DeskNet z;
    z.in_channels = net.in_channels;
    z.conv1_w.assign(net.conv1_w.size(), 0.0);
    z.conv1_b.assign(net.conv1_b.size(), 0.0);
    z.conv2_w.assign(net.conv2_w.size(), 0.0);
    z.conv2_b.assign(net.conv2_b.size(), 0.0);
    z.fc_w.assign(net.fc_w.size(), 0.0);
    z.fc_b.assign(net.fc_b.size(), 0.0);
    return z;
}

double param_checksum(const DeskNet& net) {
    double s = static_cast<double>(net.in_channels);
    for (const auto* v : {&net.conv1_w, &net.conv1_b, &net.conv2_w, &net.conv2_b, &net.fc_w, &net.fc_b})
        for (double x : *v) s += x;
    return s;
}

std::pair<std::vector<double>, ForwardTape> desknet_forward(const DeskNet& net, const Tensor4& input) {
    if (input.c != net.in_channels)
        throw std::invalid_argument("input channel count does not match network");
    if (input.h < 4 || input.w < 4 || input.h % 2 || input.w % 2)
        throw std::invalid_argument("input spatial size must be even and >= 4");

    ForwardTape tape;
    tape.input = input;
    tape.param_checksum = param_checksum(net);

    tape.z1 = Tensor4(input.n, kC1, input.h, input.w);
    conv3x3_forward(input, net.conv1_w, net.conv1_b, kC1, tape.z1);
    tape.a1 = tape.z1;
    relu_inplace(tape.a1);

    tape.p1 = Tensor4(input.n, kC1, input.h / 2, input.w / 2);
    maxpool2_forward(tape.a1, tape.p1, tape.argmax1);

    tape.z2 = Tensor4(input.n, kC2, tape.p1.h, tape.p1.w);
    conv3x3_forward(tape.p1, net.conv2_w, net.conv2_b, kC2, tape.z2);
    tape.a2 = tape.z2;
    relu_inplace(tape.a2);

    tape.p2 = Tensor4(input.n, kC2, tape.a2.h / 2, tape.a2.w / 2);
    maxpool2_forward(tape.a2, tape.p2, tape.argmax2);

    tape.gap.assign(static_cast<std::size_t>(input.n) * kC2, 0.0);
    const double inv = 1.0 / static_cast<double>(tape.p2.plane_size());
    std::vector<double> logits(input.n, 0.0);
    for (int n = 0; n < input.n; ++n) {
        double logit = net.fc_b[0];
        for (int c = 0; c < kC2; ++c) {
            const double* p = tape.p2.plane(n, c);
            double s = 0.0;
            for (std::size_t i = 0; i < tape.p2.plane_size(); ++i) s += p[i];
            const double g = s * inv;
            tape.gap[static_cast<std::size_t>(n) * kC2 + c] = g;
            logit += net.fc_w[c] * g;
        }
        logits[n] = logit;
    }
    return {std::move(logits), std::move(tape)};
}

std::pair<DeskNetGrads, Tensor4> desknet_backward(const DeskNet& net, const ForwardTape& tape,
                                                  const std::vector<double>& dlogits) {
    if (dlogits.size() != static_cast<std::size_t>(tape.input.n))
        throw std::invalid_argument("dlogits size does not match batch");
    if (tape.param_checksum != param_checksum(net))
        throw std::invalid_argument("stale forward tape: parameters changed since forward");

    DeskNetGrads grads = zero_like(net);
    const int N = tape.input.n;

    // fc and global average pool
    Tensor4 dp2(N, kC2, tape.p2.h, tape.p2.w);
    const double inv = 1.0 / static_cast<double>(tape.p2.plane_size());
    for (int n = 0; n < N; ++n) {
        const double dl = dlogits[n];
        grads.fc_b[0] += dl;
        for (int c = 0; c < kC2; ++c) {
            grads.fc_w[c] += dl * tape.gap[static_cast<std::size_t>(n) * kC2 + c];
            const double dg = dl * net.fc_w[c] * inv;
            double* p = dp2.plane(n, c);
            for (std::size_t i = 0; i < dp2.plane_size(); ++i) p[i] = dg;
        }
    }

    Tensor4 da2(N, kC2, tape.a2.h, tape.a2.w);
    maxpool2_backward(dp2, tape.argmax2, da2);
    for (std::size_t i = 0; i < da2.size(); ++i)
        if (tape.z2.v[i] <= 0.0) da2.v[i] = 0.0;

    Tensor4 dp1(N, kC1, tape.p1.h, tape.p1.w);
    conv3x3_backward(tape.p1, net.conv2_w, kC2, da2, grads.conv2_w, grads.conv2_b, dp1);

    Tensor4 da1(N, kC1, tape.a1.h, tape.a1.w);
    maxpool2_backward(dp1, tape.argmax1, da1);
    for (std::size_t i = 0; i < da1.size(); ++i)
        if (tape.z1.v[i] <= 0.0) da1.v[i] = 0.0;

    Tensor4 dinput(N, net.in_channels, tape.input.h, tape.input.w);
    conv3x3_backward(tape.input, net.conv1_w, kC1, da1, grads.conv1_w, grads.conv1_b, dinput);

    return {std::move(grads), std::move(dinput)};
}

std::pair<double, std::vector<double>> bce_loss(const std::vector<double>& logits,
                                                const std::vector<double>& labels) {
    if (logits.size() != labels.size())
        throw std::invalid_argument("logits/labels size mismatch");
    if (logits.empty()) throw std::invalid_argument("empty batch");
    const double invn = 1.0 / static_cast<double>(logits.size());
    double loss = 0.0;
    std::vector<double> grads(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], y = labels[i];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        grads[i] = (sigmoid(z) - y) * invn;
    }
    return {loss * invn, std::move(grads)};
}

}  // namespace wsolab
