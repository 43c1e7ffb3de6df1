#include "wsolab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wsolab/rng.hpp"

namespace wsolab {

namespace {

double loss_of(const GradCheckConfig& config) {
    std::vector<double> logits;
    if (config.wso) {
        const auto activated = wso_forward(*config.wso, config.input);
        logits = desknet_forward(config.net, activated).first;
    } else {
        logits = desknet_forward(config.net, config.input).first;
    }
    return bce_loss(logits, config.labels).first;
}

struct ParamRef {
    double* value;
    double step;
    double analytic;
};

std::vector<ParamRef> collect_params(GradCheckConfig& config, const StepSchedule& steps) {
    // analytic backward
    std::vector<double> logits;
    ForwardTape tape;
    std::optional<Tensor4> activated;
    if (config.wso) {
        activated = wso_forward(*config.wso, config.input);
        std::tie(logits, tape) = desknet_forward(config.net, *activated);
    } else {
        std::tie(logits, tape) = desknet_forward(config.net, config.input);
    }
    const auto dlogits = bce_loss(logits, config.labels).second;
    auto [net_grads, dinput] = desknet_backward(config.net, tape, dlogits);

    std::vector<ParamRef> refs;
    if (config.wso) {
        const auto wso_grads = wso_backward(*config.wso, config.input, dinput).first;
        for (std::size_t c = 0; c < config.wso->channels.size(); ++c) {
            refs.push_back({&config.wso->channels[c].w, steps.wso_w, wso_grads.dw[c]});
            refs.push_back({&config.wso->channels[c].b, steps.wso_b, wso_grads.db[c]});
        }
    }
    auto add = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i)
            refs.push_back({&params[i], steps.net, grads[i]});
    };
    add(config.net.conv1_w, net_grads.conv1_w);
    add(config.net.conv1_b, net_grads.conv1_b);
    add(config.net.conv2_w, net_grads.conv2_w);
    add(config.net.conv2_b, net_grads.conv2_b);
    add(config.net.fc_w, net_grads.fc_w);
    add(config.net.fc_b, net_grads.fc_b);
    return refs;
}

}  // namespace

double finite_diff_check(const GradCheckConfig& config, const StepSchedule& steps) {
    GradCheckConfig work = config;
    auto refs = collect_params(work, steps);

    double worst = 0.0;
    for (auto& ref : refs) {
        const double original = *ref.value;
        *ref.value = original + ref.step;
        const double lp = loss_of(work);
        *ref.value = original - ref.step;
        const double lm = loss_of(work);
        *ref.value = original;
        const double fd = (lp - lm) / (2.0 * ref.step);
        const double denom = std::max(std::abs(ref.analytic), std::abs(fd));
        const double err = denom < 1e-8 ? std::abs(ref.analytic - fd)
                                        : std::abs(ref.analytic - fd) / denom;
        worst = std::max(worst, err);
    }
    return worst;
}

namespace {

// Margins a finite-difference step must not be able to bridge. With a WSO
// front end the slope step gets amplified by raw HU magnitudes, so those
// configs need a wider berth; a plain CNN on [0,1] inputs moves any
// pre-activation by at most a few times the 1e-4 step.
constexpr double kWsoKinkMargin = 1e-3;
constexpr double kNetKinkMargin = 5e-4;
constexpr double kBandMargin = 1e-2;  // gray-level distance to the clamp edges

bool pool_windows_safe(const Tensor4& a, const Tensor4& z, double kink_margin) {
    const int Ho = a.h / 2, Wo = a.w / 2;
    for (int n = 0; n < a.n; ++n)
        for (int c = 0; c < a.c; ++c) {
            const double* ap = a.plane(n, c);
            const double* zp = z.plane(n, c);
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x) {
                    const int base = (2 * y) * a.w + 2 * x;
                    const int idx[4] = {base, base + 1, base + a.w, base + a.w + 1};
                    double top1 = -1.0, top2 = -1.0;
                    for (int k : idx) {
                        const double v = ap[k];
                        if (v > top1) {
                            top2 = top1;
                            top1 = v;
                        } else if (v > top2) {
                            top2 = v;
                        }
                    }
                    if (top1 == 0.0) {
                        // all cells rest on the ReLU floor; safe only if they stay there
                        for (int k : idx)
                            if (zp[k] > -kink_margin) return false;
                    } else if (top1 - top2 < kink_margin) {
                        return false;
                    }
                }
        }
    return true;
}

bool config_safe(const GradCheckConfig& config) {
    const double kink_margin = config.wso ? kWsoKinkMargin : kNetKinkMargin;
    Tensor4 net_input = config.input;
    if (config.wso) {
        if (config.wso->kind == WindowFnKind::Linear) {
            const double u = config.wso->d.u;
            for (const auto& ch : config.wso->channels)
                for (double x : config.input.v) {
                    const double z = ch.w * x + ch.b;
                    if (std::abs(z) < kBandMargin || std::abs(z - u) < kBandMargin) return false;
                }
        }
        net_input = wso_forward(*config.wso, config.input);
    }
    const auto tape = desknet_forward(config.net, net_input).second;
    for (double z : tape.z1.v)
        if (std::abs(z) < kink_margin) return false;
    for (double z : tape.z2.v)
        if (std::abs(z) < kink_margin) return false;
    return pool_windows_safe(tape.a1, tape.z1, kink_margin) &&
           pool_windows_safe(tape.a2, tape.z2, kink_margin);
}

}  // namespace

GradCheckConfig make_gradcheck_config(std::uint64_t seed, WindowFnKind kind, bool with_wso,
                                      int channels, int hw, int batch) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 20000; ++attempt) {
        GradCheckConfig config;
        std::vector<WindowSetting> settings;
        if (with_wso) {
            for (int c = 0; c < channels; ++c)
                settings.push_back({rng.uniform(20.0, 60.0), rng.uniform(60.0, 150.0)});
            config.wso = init_from_settings(kind, DisplayRange{}, settings);
        }
        config.net = init_desknet(channels, rng);
        // small random biases move pre-activations off symmetric zero
        for (auto& b : config.net.conv1_b) b = rng.uniform(-0.1, 0.1);
        for (auto& b : config.net.conv2_b) b = rng.uniform(-0.1, 0.1);

        if (with_wso) {
            config.input = Tensor4(batch, 1, hw, hw);
            for (auto& x : config.input.v) {
                const auto& s = settings[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(settings.size()) - 1))];
                x = s.level + s.width * rng.uniform(-1.2, 1.2);
            }
        } else {
            config.input = Tensor4(batch, channels, hw, hw);
            for (auto& x : config.input.v) x = rng.uniform(0.0, 1.0);
        }
        config.labels.resize(static_cast<std::size_t>(batch));
        for (auto& y : config.labels) y = rng.uniform() < 0.5 ? 0.0 : 1.0;

        if (config_safe(config)) return config;
    }
    throw std::runtime_error("could not build a well-conditioned gradient-check configuration");
}

}  // namespace wsolab
