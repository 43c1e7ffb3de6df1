#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "wsolab/rng.hpp"
#include "wsolab/wso.hpp"

using namespace wsolab;

namespace {
const DisplayRange kDefault{255.0, 1.0};
const WindowSetting kBrain{50.0, 100.0};
}  // namespace

TEST_CASE("initialization from settings matches the closed-form coefficients") {
    const std::vector<WindowSetting> brain = {kBrain};
    const auto lin = init_from_settings(WindowFnKind::Linear, kDefault, brain);
    CHECK(lin.channels.size() == 1);
    CHECK(lin.channels[0].w == doctest::Approx(2.55).epsilon(1e-12));
    CHECK(lin.channels[0].b == doctest::Approx(0.0).epsilon(1e-12));

    const auto sig = init_from_settings(WindowFnKind::Sigmoid, kDefault, brain);
    CHECK(sig.channels[0].w == doctest::Approx(0.02 * std::log(254.0)).epsilon(1e-12));
    CHECK(sig.channels[0].b == doctest::Approx(-std::log(254.0)).epsilon(1e-12));
    CHECK(sig.channels[0].w == doctest::Approx(0.1107466).epsilon(1e-6));
    CHECK(sig.channels[0].b == doctest::Approx(-5.5373343).epsilon(1e-6));
}

TEST_CASE("multi-channel initialization preserves setting order") {
    const std::vector<WindowSetting> settings = {kBrain, {50.0, 130.0}};
    const auto layer = init_from_settings(WindowFnKind::Linear, kDefault, settings);
    REQUIRE(layer.channels.size() == 2);
    CHECK(layer.channels[0].w == doctest::Approx(255.0 / 100.0));
    CHECK(layer.channels[1].w == doctest::Approx(255.0 / 130.0));
}

TEST_CASE("forward emits [0,1] activations and matches the window closed forms") {
    const auto layer = init_from_settings(WindowFnKind::Linear, kDefault, {{kBrain}});
    Tensor4 batch(1, 1, 1, 1);
    batch.v[0] = 50.0;
    const auto out = wso_forward(layer, batch);
    CHECK(out.v[0] == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(21);
    for (auto kind : {WindowFnKind::Linear, WindowFnKind::Sigmoid}) {
        const auto l = init_from_settings(kind, kDefault, {{kBrain}});
        Tensor4 b(1, 1, 10, 100);
        for (auto& x : b.v) x = rng.uniform(-2000.0, 3000.0);
        const auto act = wso_forward(l, b);
        for (std::size_t i = 0; i < b.size(); ++i) {
            CHECK(act.v[i] >= 0.0);
            CHECK(act.v[i] <= 1.0);
            const double expected = apply_window(b.v[i], kind, kBrain, kDefault);
            CHECK(std::abs(act.v[i] * kDefault.u - expected) <= 1e-12 * kDefault.u);
        }
    }
}

TEST_CASE("backward: clamp plateau contributes nothing, sigmoid center gives 0.25") {
    const auto lin = init_from_settings(WindowFnKind::Linear, kDefault, {{kBrain}});
    Tensor4 saturated(1, 1, 1, 1);
    saturated.v[0] = 500.0;  // far above the window end
    Tensor4 upstream(1, 1, 1, 1);
    upstream.v[0] = 1.0;
    const auto [lg, ldin] = wso_backward(lin, saturated, upstream);
    CHECK(lg.dw[0] == 0.0);
    CHECK(lg.db[0] == 0.0);
    CHECK(ldin.v[0] == 0.0);

    const auto sig = init_from_settings(WindowFnKind::Sigmoid, kDefault, {{kBrain}});
    Tensor4 center(1, 1, 1, 1);
    center.v[0] = kBrain.level;
    const auto [sg, sdin] = wso_backward(sig, center, upstream);
    CHECK(sg.db[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(sg.dw[0] == doctest::Approx(0.25 * kBrain.level).epsilon(1e-12));
}

TEST_CASE("backward rejects a mismatched upstream shape") {
    const auto layer = init_from_settings(WindowFnKind::Linear, kDefault, {{kBrain}});
    Tensor4 batch(1, 1, 2, 2);
    Tensor4 bad(1, 2, 2, 2);
    CHECK_THROWS_AS(wso_backward(layer, batch, bad), std::invalid_argument);
}

// finite-difference oracle on the scalar objective sum(upstream * forward)
TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const auto kind = trial % 2 ? WindowFnKind::Sigmoid : WindowFnKind::Linear;
        std::vector<WindowSetting> settings;
        const int channels = 1 + static_cast<int>(rng.uniform_int(0, 1));
        for (int c = 0; c < channels; ++c)
            settings.push_back({rng.uniform(0.0, 6.0), rng.uniform(15.0, 30.0)});
        auto layer = init_from_settings(kind, kDefault, settings);

        // Positive pixels and upstream keep the per-channel gradient sums
        // sign-coherent, so the truncation of each term stays a relative
        // error instead of accumulating against a cancelling total.
        Tensor4 batch(2, 1, 4, 8);
        for (auto& x : batch.v) {
            // keep every pixel away from the clamp kinks under the step sizes
            for (;;) {
                x = rng.uniform(2.0, 15.0);
                bool safe = true;
                for (const auto& ch : layer.channels) {
                    const double z = ch.w * x + ch.b;
                    if (std::abs(z) < 0.1 || std::abs(z - kDefault.u) < 0.1) safe = false;
                }
                if (safe) break;
            }
        }
        Tensor4 upstream(2, channels, 4, 8);
        for (auto& g : upstream.v) g = rng.uniform(0.2, 1.0);

        auto objective = [&](const WsoLayer& l) {
            const auto out = wso_forward(l, batch);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += upstream.v[i] * out.v[i];
            return s;
        };

        const auto grads = wso_backward(layer, batch, upstream).first;
        for (int c = 0; c < channels; ++c) {
            auto fd = [&](double WsoChannel::* member, double step) {
                auto perturbed = layer;
                perturbed.channels[c].*member += step;
                const double lp = objective(perturbed);
                perturbed.channels[c].*member -= 2 * step;
                const double lm = objective(perturbed);
                return (lp - lm) / (2 * step);
            };
            const double fdw = fd(&WsoChannel::w, 1e-3);
            const double fdb = fd(&WsoChannel::b, 1e-2);
            CHECK(std::abs(fdw - grads.dw[c]) <=
                  1e-4 * std::max({std::abs(fdw), std::abs(grads.dw[c]), 1e-6}));
            CHECK(std::abs(fdb - grads.db[c]) <=
                  1e-4 * std::max({std::abs(fdb), std::abs(grads.db[c]), 1e-6}));
        }
    }
}

TEST_CASE("channel permutation permutes outputs and gradients identically") {
    Rng rng(41);
    std::vector<WindowSetting> settings = {{50.0, 100.0}, {40.0, 400.0}, {300.0, 1500.0}};
    const auto layer = init_from_settings(WindowFnKind::Sigmoid, kDefault, settings);
    auto permuted = layer;
    std::swap(permuted.channels[0], permuted.channels[2]);

    Tensor4 batch(1, 1, 4, 4);
    for (auto& x : batch.v) x = rng.uniform(-500.0, 1500.0);
    Tensor4 upstream(1, 3, 4, 4);
    for (auto& g : upstream.v) g = rng.uniform(-1.0, 1.0);
    auto upstream_permuted = upstream;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            std::swap(upstream_permuted.at(0, 0, y, x), upstream_permuted.at(0, 2, y, x));

    const auto out = wso_forward(layer, batch);
    const auto out_p = wso_forward(permuted, batch);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(out.at(0, 0, y, x) == out_p.at(0, 2, y, x));
            CHECK(out.at(0, 1, y, x) == out_p.at(0, 1, y, x));
            CHECK(out.at(0, 2, y, x) == out_p.at(0, 0, y, x));
        }

    const auto g = wso_backward(layer, batch, upstream).first;
    const auto g_p = wso_backward(permuted, batch, upstream_permuted).first;
    CHECK(g.dw[0] == g_p.dw[2]);
    CHECK(g.dw[1] == g_p.dw[1]);
    CHECK(g.dw[2] == g_p.dw[0]);
    CHECK(g.db[0] == g_p.db[2]);
}

TEST_CASE("settings round-trip through the layer inverse") {
    const auto bone = init_from_settings(WindowFnKind::Linear, kDefault, {{preset("bone")}});
    const auto recovered = settings_from_layer(bone);
    CHECK(recovered[0].level == doctest::Approx(300.0).epsilon(1e-9));
    CHECK(recovered[0].width == doctest::Approx(1500.0).epsilon(1e-9));

    WsoLayer sig;
    sig.kind = WindowFnKind::Sigmoid;
    sig.d = kDefault;
    sig.channels = {{0.1107466, -5.5373343}};
    const auto s = settings_from_layer(sig)[0];
    CHECK(s.level == doctest::Approx(50.0).epsilon(1e-4));
    CHECK(s.width == doctest::Approx(100.0).epsilon(1e-4));

    WsoLayer lin;
    lin.kind = WindowFnKind::Linear;
    lin.d = kDefault;
    lin.channels = {{2.55, 0.0}};
    const auto sl = settings_from_layer(lin)[0];
    CHECK(sl.level == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(sl.width == doctest::Approx(100.0).epsilon(1e-12));

    Rng rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto kind = trial % 2 ? WindowFnKind::Sigmoid : WindowFnKind::Linear;
        const WindowSetting original{rng.uniform(-500.0, 1000.0), rng.uniform(0.5, 3000.0)};
        const auto layer = init_from_settings(kind, kDefault, {{original}});
        const auto back = settings_from_layer(layer)[0];
        CHECK(back.level == doctest::Approx(original.level).epsilon(1e-9));
        CHECK(back.width == doctest::Approx(original.width).epsilon(1e-9));
    }
}

TEST_CASE("degenerate slope is reported at recovery time") {
    WsoLayer layer;
    layer.kind = WindowFnKind::Linear;
    layer.d = kDefault;
    layer.channels = {{-0.5, 0.0}};
    CHECK_THROWS_WITH_AS(settings_from_layer(layer), doctest::Contains("degenerated"),
                         std::runtime_error);
}
