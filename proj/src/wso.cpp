#include "wsolab/wso.hpp"

#include <cmath>
#include <stdexcept>

namespace wsolab {

WsoLayer init_from_settings(WindowFnKind kind, const DisplayRange& d,
                            const std::vector<WindowSetting>& settings) {
    validate(d);
    if (settings.empty())
        throw std::invalid_argument("at least one window setting is required");
    WsoLayer layer;
    layer.kind = kind;
    layer.d = d;
    layer.channels.reserve(settings.size());
    for (const auto& s : settings) {
        validate(s);
        layer.channels.push_back({window_slope(kind, s, d), window_offset(kind, s, d)});
    }
    return layer;
}

Tensor4 wso_forward(const WsoLayer& layer, const Tensor4& batch) {
    if (layer.channels.empty()) throw std::invalid_argument("WSO layer has no channels");
    if (batch.c != 1) throw std::invalid_argument("WSO input must have one channel");
    const int cout = static_cast<int>(layer.channels.size());
    const double u = layer.d.u;
    Tensor4 out(batch.n, cout, batch.h, batch.w);
    const std::size_t ps = batch.plane_size();
    for (int n = 0; n < batch.n; ++n) {
        const double* in = batch.plane(n, 0);
        for (int c = 0; c < cout; ++c) {
            const double w = layer.channels[c].w;
            const double b = layer.channels[c].b;
            double* o = out.plane(n, c);
            if (layer.kind == WindowFnKind::Linear) {
                for (std::size_t i = 0; i < ps; ++i) {
                    const double z = w * in[i] + b;
                    o[i] = (z <= 0.0 ? 0.0 : z >= u ? u : z) / u;
                }
            } else {
                for (std::size_t i = 0; i < ps; ++i) {
                    const double z = w * in[i] + b;
                    o[i] = 1.0 / (1.0 + std::exp(-z));
                }
            }
        }
    }
    return out;
}

std::pair<WsoGradients, Tensor4> wso_backward(const WsoLayer& layer, const Tensor4& batch,
                                              const Tensor4& upstream) {
    const int cout = static_cast<int>(layer.channels.size());
    if (batch.c != 1) throw std::invalid_argument("WSO input must have one channel");
    require_shape(upstream, batch.n, cout, batch.h, batch.w, "wso_backward upstream");

    WsoGradients grads;
    grads.dw.assign(cout, 0.0);
    grads.db.assign(cout, 0.0);
    Tensor4 dinput(batch.n, 1, batch.h, batch.w);

    const double u = layer.d.u;
    const std::size_t ps = batch.plane_size();
    for (int n = 0; n < batch.n; ++n) {
        const double* in = batch.plane(n, 0);
        double* din = dinput.plane(n, 0);
        for (int c = 0; c < cout; ++c) {
            const double w = layer.channels[c].w;
            const double b = layer.channels[c].b;
            const double* up = upstream.plane(n, c);
            double dw = 0.0, db = 0.0;
            if (layer.kind == WindowFnKind::Linear) {
                const double inv_u = 1.0 / u;
                for (std::size_t i = 0; i < ps; ++i) {
                    const double z = w * in[i] + b;
                    if (z > 0.0 && z < u) {
                        const double g = up[i] * inv_u;
                        dw += g * in[i];
                        db += g;
                        din[i] += g * w;
                    }
                }
            } else {
                for (std::size_t i = 0; i < ps; ++i) {
                    const double s = 1.0 / (1.0 + std::exp(-(w * in[i] + b)));
                    const double g = up[i] * s * (1.0 - s);
                    dw += g * in[i];
                    db += g;
                    din[i] += g * w;
                }
            }
            grads.dw[c] += dw;
            grads.db[c] += db;
        }
    }
    return {std::move(grads), std::move(dinput)};
}

std::vector<WindowSetting> settings_from_layer(const WsoLayer& layer) {
    std::vector<WindowSetting> out;
    out.reserve(layer.channels.size());
    const double u = layer.d.u;
    const double k = std::log(u / layer.d.eps - 1.0);
    for (const auto& ch : layer.channels) {
        if (!(ch.w > 0.0))
            throw std::runtime_error("window degenerated during training (w <= 0)");
        WindowSetting s;
        if (layer.kind == WindowFnKind::Linear) {
            s.width = u / ch.w;
            s.level = -ch.b / ch.w + s.width / 2.0;
        } else {
            s.width = 2.0 * k / ch.w;
            s.level = -ch.b / ch.w;
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace wsolab
