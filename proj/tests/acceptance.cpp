// Acceptance gate: one pass/fail line per criterion, exit 0 iff all pass.
// argv[1] is the path to the wsolab CLI binary (used by criterion 8).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "wsolab/data.hpp"
#include "wsolab/gradcheck.hpp"
#include "wsolab/metrics.hpp"
#include "wsolab/rng.hpp"
#include "wsolab/train.hpp"
#include "wsolab/windowing.hpp"
#include "wsolab/wso.hpp"

using namespace wsolab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
int g_failures = 0;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, const char* title, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s%s%s\n", criterion, title, ok ? "PASS" : "FAIL",
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

bool close_rel(double got, double want, double tol) {
    const double denom = std::max(std::abs(want), 1e-300);
    return std::abs(got - want) / denom <= tol || std::abs(got - want) <= tol * 1e-6;
}

// ---------------------------------------------------------------- 1: anchors
void criterion_anchors() {
    const auto start = Clock::now();
    const DisplayRange d;  // u=255, eps=1
    Rng rng(1001);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 250 && ok; ++trial) {
        const WindowSetting s{rng.uniform(-200.0, 600.0), rng.uniform(1.0, 2000.0)};
        const double lo = s.level - s.width / 2.0, hi = s.level + s.width / 2.0;

        struct Anchor {
            WindowFnKind kind;
            double x, want;
        };
        const Anchor anchors[] = {
            {WindowFnKind::Linear, lo, 0.0},
            {WindowFnKind::Linear, s.level, d.u / 2.0},
            {WindowFnKind::Linear, hi, d.u},
            {WindowFnKind::Sigmoid, lo, d.eps},
            {WindowFnKind::Sigmoid, s.level, d.u / 2.0},
            {WindowFnKind::Sigmoid, hi, d.u - d.eps},
        };
        for (const auto& a : anchors) {
            const double got = apply_window(a.x, a.kind, s, d);
            const double denom = std::max(std::abs(a.want), 1.0);
            if (std::abs(got - a.want) / denom > 1e-9) {
                ok = false;
                detail = "WL=" + fmt6(s.level) + " WW=" + fmt6(s.width) + " x=" + fmt6(a.x) +
                         " got " + fmt6(got) + " want " + fmt6(a.want);
                break;
            }
        }
    }
    const double elapsed = seconds_since(start);
    if (ok && elapsed >= 1.0) {
        ok = false;
        detail = "took " + fmt6(elapsed) + " s (budget 1 s)";
    }
    if (ok) detail = "250 random settings, 6 anchors each, " + fmt6(elapsed) + " s";
    report(1, "closed-form anchors", ok, detail);
}

// --------------------------------------------------- 2: initialization values
void criterion_init_values() {
    const DisplayRange d;
    bool ok = true;
    std::string detail;
    for (const auto& name : preset_names()) {
        const auto s = preset(name);
        // independent recomputation of the closed forms
        const double lin_w = d.u / s.width;
        const double lin_b = -(d.u / s.width) * (s.level - s.width / 2.0);
        const double k = std::log(d.u / d.eps - 1.0);
        const double sig_w = 2.0 / s.width * k;
        const double sig_b = -2.0 * s.level / s.width * k;

        const auto lin = init_from_settings(WindowFnKind::Linear, d, {s}).channels[0];
        const auto sig = init_from_settings(WindowFnKind::Sigmoid, d, {s}).channels[0];
        if (!close_rel(lin.w, lin_w, 1e-12) || !close_rel(lin.b, lin_b, 1e-12) ||
            !close_rel(sig.w, sig_w, 1e-12) || !close_rel(sig.b, sig_b, 1e-12)) {
            ok = false;
            detail = "preset " + name;
            break;
        }
    }
    // the two spot values quoted in the report
    const auto lin_brain = init_from_settings(WindowFnKind::Linear, d, {preset("brain")}).channels[0];
    const auto sig_brain = init_from_settings(WindowFnKind::Sigmoid, d, {preset("brain")}).channels[0];
    if (ok && (!close_rel(lin_brain.w, 2.55, 1e-12) || std::abs(lin_brain.b) > 1e-12 ||
               std::abs(sig_brain.w - 0.1107466) > 1e-6 ||
               std::abs(sig_brain.b - -5.5373343) > 1e-6)) {
        ok = false;
        detail = "brain spot values";
    }
    if (ok) detail = "4 presets x 2 kinds vs independent formulas at 1e-12";
    report(2, "initialization values", ok, detail);
}

// ------------------------------------------------------------- 3: round-trip
void criterion_round_trip() {
    const auto start = Clock::now();
    const DisplayRange d;
    Rng rng(1003);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const WindowSetting s{rng.uniform(-500.0, 1500.0), rng.uniform(0.5, 3000.0)};
        for (auto kind : {WindowFnKind::Linear, WindowFnKind::Sigmoid}) {
            const auto back =
                settings_from_layer(init_from_settings(kind, d, {s})).front();
            if (!close_rel(back.level, s.level, 1e-9) && std::abs(back.level - s.level) > 1e-9) {
                ok = false;
            }
            if (!close_rel(back.width, s.width, 1e-9)) ok = false;
            if (!ok) {
                detail = "WL=" + fmt6(s.level) + " WW=" + fmt6(s.width) + " -> WL=" +
                         fmt6(back.level) + " WW=" + fmt6(back.width);
                break;
            }
        }
    }
    const double elapsed = seconds_since(start);
    if (ok && elapsed >= 1.0) {
        ok = false;
        detail = "took " + fmt6(elapsed) + " s (budget 1 s)";
    }
    if (ok) detail = "1000 random settings, both kinds, " + fmt6(elapsed) + " s";
    report(3, "settings round-trip", ok, detail);
}

// ------------------------------------------------------ 4: gradient correctness
void criterion_gradients() {
    const auto start = Clock::now();
    bool ok = true;
    double worst = 0.0;
    std::string detail;
    for (std::uint64_t i = 0; i < 24 && ok; ++i) {
        const auto kind = i % 2 ? WindowFnKind::Sigmoid : WindowFnKind::Linear;
        const bool with_wso = i % 3 != 2;  // mix WSO-fronted and plain-CNN configs
        const int channels = i % 4 == 1 ? 2 : 1;
        const auto config = make_gradcheck_config(4000 + i, kind, with_wso, channels, 8, 2);
        const double err = finite_diff_check(config);
        worst = std::max(worst, err);
        if (!(err < 1e-3)) {
            ok = false;
            detail = "config " + std::to_string(i) + " rel err " + fmt6(err);
        }
    }
    const double elapsed = seconds_since(start);
    if (ok && elapsed >= 30.0) {
        ok = false;
        detail = "took " + fmt6(elapsed) + " s (budget 30 s)";
    }
    if (ok)
        detail = "24 configs at 8x8, worst rel err " + fmt6(worst) + ", " + fmt6(elapsed) + " s";
    report(4, "analytic vs finite-difference gradients", ok, detail);
}

// ---------------------------------------------------------- 5: metric oracles
double auc_brute(const ScoredLabels& sl) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sl.scores.size(); ++i) {
        if (sl.labels[i] != 1) continue;
        for (std::size_t j = 0; j < sl.scores.size(); ++j) {
            if (sl.labels[j] != 0) continue;
            ++pairs;
            if (sl.scores[i] > sl.scores[j])
                wins += 1.0;
            else if (sl.scores[i] == sl.scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

double ap_brute(const ScoredLabels& sl) {
    std::vector<double> thresholds = sl.scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::size_t n_pos = 0;
    for (int l : sl.labels) n_pos += static_cast<std::size_t>(l);
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < sl.scores.size(); ++i)
            if (sl.scores[i] >= t) (sl.labels[i] == 1 ? tp : fp)++;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

void criterion_metrics() {
    const auto start = Clock::now();
    // fixed score grid; exhaustive over all label/score assignments up to n=4,
    // then dense random sampling for n in [5, 10]
    const std::vector<double> grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    bool ok = true;
    std::string detail;
    long long checked = 0;

    std::function<void(ScoredLabels&, std::size_t, std::size_t)> recurse =
        [&](ScoredLabels& sl, std::size_t pos, std::size_t n) {
            if (!ok) return;
            if (pos == n) {
                bool has_pos = false, has_neg = false;
                for (int l : sl.labels) (l ? has_pos : has_neg) = true;
                if (!has_pos || !has_neg) return;
                ++checked;
                if (roc_auc(sl) != auc_brute(sl) || average_precision(sl) != ap_brute(sl)) {
                    ok = false;
                    detail = "exhaustive mismatch at n=" + std::to_string(n);
                }
                return;
            }
            for (double s : grid)
                for (int l : {0, 1}) {
                    sl.scores[pos] = s;
                    sl.labels[pos] = l;
                    recurse(sl, pos + 1, n);
                }
        };
    for (std::size_t n = 2; n <= 4 && ok; ++n) {
        ScoredLabels sl;
        sl.scores.resize(n);
        sl.labels.resize(n);
        recurse(sl, 0, n);
    }

    Rng rng(1005);
    for (int trial = 0; trial < 20000 && ok; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(5, 10));
        ScoredLabels sl;
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            sl.scores.push_back(grid[rng.uniform_int(0, grid.size() - 1)]);
            sl.labels.push_back(static_cast<int>(rng.uniform_int(0, 1)));
            (sl.labels.back() ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        ++checked;
        if (roc_auc(sl) != auc_brute(sl) || average_precision(sl) != ap_brute(sl)) {
            ok = false;
            detail = "sampled mismatch at n=" + std::to_string(n);
        }
    }
    const double elapsed = seconds_since(start);
    if (ok && elapsed >= 60.0) {
        ok = false;
        detail = "took " + fmt6(elapsed) + " s (budget 60 s)";
    }
    if (ok)
        detail = std::to_string(checked) + " inputs, exact equality, " + fmt6(elapsed) + " s";
    report(5, "metric oracles", ok, detail);
}

// ---------------------------------------- 6 + 7: grid ordering, learned window
void criteria_grid_and_window() {
    const auto start = Clock::now();
    PhantomSpec spec;
    const auto samples = generate_dataset(spec, Task::Hemorrhage, 100, 0.5, 0);
    const auto split = split_by_case(samples, {0.6, 0.2, 0.2}, 0);
    const TrainHyper hyper;  // defaults: 60 epochs, batch 64
    const auto rows = run_grid(Task::Hemorrhage, split, hyper, 0);
    const double elapsed = seconds_since(start);

    std::map<std::string, const GridRow*> by_name;
    for (const auto& r : rows) by_name[r.variant] = &r;

    bool ok = true;
    std::string detail;
    for (const auto& r : rows)
        if (!r.ok) {
            ok = false;
            detail = "variant " + r.variant + " failed: " + r.error;
        }

    if (ok) {
        const double full_auc = by_name.at("full_range")->auc;
        double max_fixed = 0.0;
        std::string worst_variant;
        double worst_margin = 1e300;
        for (const auto& r : rows) {
            if (r.variant == "full_range") continue;
            if (r.variant.rfind("fixed_", 0) == 0) max_fixed = std::max(max_fixed, r.auc);
            const double margin = r.auc - full_auc;
            if (margin < worst_margin) {
                worst_margin = margin;
                worst_variant = r.variant;
            }
            if (!(r.auc > full_auc)) {
                ok = false;
                detail = r.variant + " AUC " + fmt6(r.auc) + " not > full_range " + fmt6(full_auc);
            }
        }
        const double wso_auc = by_name.at("wso_sigmoid_s1s2")->auc;
        if (ok && !(wso_auc >= max_fixed - 0.02)) {
            ok = false;
            detail = "wso_sigmoid_s1s2 AUC " + fmt6(wso_auc) + " < max fixed " + fmt6(max_fixed) +
                     " - 0.02";
        }
        if (ok && elapsed >= 900.0) {
            ok = false;
            detail = "took " + fmt6(elapsed) + " s (budget 900 s)";
        }
        if (ok)
            detail = "full_range AUC " + fmt6(full_auc) + ", min other margin " +
                     fmt6(worst_margin) + " (" + worst_variant + "), wso_sigmoid_s1s2 " +
                     fmt6(wso_auc) + " vs max fixed " + fmt6(max_fixed) + ", " + fmt6(elapsed) +
                     " s";
    }
    report(6, "qualitative grid ordering", ok, detail);

    // criterion 7: learned windows of wso(sigmoid, S1+S2) overlap the lesion band
    bool ok7 = false;
    std::string detail7;
    const auto it = by_name.find("wso_sigmoid_s1s2");
    if (it == by_name.end() || !it->second->ok) {
        detail7 = "variant unavailable";
    } else {
        const auto [band_lo, band_hi] = lesion_hu_band(spec, Task::Hemorrhage);
        // learned_windows is "WL1:WW1;WL2:WW2"
        std::istringstream ls(it->second->learned_windows);
        std::string tok;
        while (std::getline(ls, tok, ';')) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) continue;
            const double wl = std::stod(tok.substr(0, colon));
            const double ww = std::stod(tok.substr(colon + 1));
            const double lo = wl - ww / 2.0, hi = wl + ww / 2.0;
            if (hi >= band_lo && lo <= band_hi) {
                ok7 = true;
                detail7 = "window [" + fmt6(lo) + ", " + fmt6(hi) + "] overlaps lesion band [" +
                          fmt6(band_lo) + ", " + fmt6(band_hi) + "]";
                break;
            }
            detail7 = "window [" + fmt6(lo) + ", " + fmt6(hi) + "] misses band [" +
                      fmt6(band_lo) + ", " + fmt6(band_hi) + "]";
        }
    }
    report(7, "learned window covers the lesion band", ok7, detail7);
}

// ------------------------------------------- 8: determinism and persistence
int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_persistence() {
    bool ok = true;
    std::string detail;
    const fs::path dir = fs::temp_directory_path() / "wsolab_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string data_dir = (dir / "data").string();
    const std::string manifest = (dir / "data" / "manifest.tsv").string();

    if (run_cli("--seed 3 gen-data --task hemorrhage --cases 12 --pos-frac 0.5 --out-dir " +
                data_dir + " > /dev/null") != 0) {
        ok = false;
        detail = "gen-data failed";
    }

    const std::string train_args = "--seed 4 --quiet train --variant wso_sigmoid_s1 "
                                   "--task hemorrhage --epochs 4 --data " + manifest;
    if (ok && (run_cli(train_args + " --out " + (dir / "a.ckpt").string()) != 0 ||
               run_cli(train_args + " --out " + (dir / "b.ckpt").string()) != 0)) {
        ok = false;
        detail = "train failed";
    }
    if (ok && slurp(dir / "a.ckpt.history.csv") != slurp(dir / "b.ckpt.history.csv")) {
        ok = false;
        detail = "repeated seeded training produced different history CSVs";
    }
    if (ok && slurp(dir / "a.ckpt.history.csv").empty()) {
        ok = false;
        detail = "empty history CSV";
    }

    if (ok) {
        // save/load round-trip must not perturb evaluation
        const auto model = load_checkpoint(dir / "a.ckpt");
        save_checkpoint(model, dir / "a2.ckpt");
        const std::string eval_a = " eval --model " + (dir / "a.ckpt").string() + " --data " +
                                   manifest + " > " + (dir / "eval_a.txt").string();
        const std::string eval_b = " eval --model " + (dir / "a2.ckpt").string() + " --data " +
                                   manifest + " > " + (dir / "eval_b.txt").string();
        if (run_cli(eval_a) != 0 || run_cli(eval_b) != 0) {
            ok = false;
            detail = "eval failed";
        } else if (slurp(dir / "eval_a.txt") != slurp(dir / "eval_b.txt") ||
                   slurp(dir / "eval_a.txt").empty()) {
            ok = false;
            detail = "checkpoint round-trip changed eval output";
        }
    }

    if (ok) {
        HuImage img;
        img.height = 2;
        img.width = 3;
        img.rescale_slope = 1.0;
        img.rescale_intercept = 0.0;
        img.values = {-1000.0, 0.0, 40.0, 80.0, 1500.0, 3071.0};
        write_hu_file(img, dir / "rt.huraw");
        const auto back = read_hu_file(dir / "rt.huraw");
        if (back.values != img.values || back.rescale_slope != img.rescale_slope ||
            back.rescale_intercept != img.rescale_intercept) {
            ok = false;
            detail = "HURAW1 round-trip not exact at slope 1 / intercept 0";
        }
    }
    if (ok) detail = "history CSVs identical, eval bitwise stable, HURAW1 exact";
    report(8, "determinism and persistence", ok, detail);
}

// ---------------------------------------------------------------- 9: schedule
void criterion_schedule() {
    const TrainHyper hyper;
    const bool ok = close_rel(lr_at(0, hyper), 0.001, 1e-12) &&
                    close_rel(lr_at(20, hyper), 0.0001, 1e-12) &&
                    close_rel(lr_at(40, hyper), 0.00001, 1e-12);
    report(9, "learning-rate schedule", ok,
           ok ? "0.001 / 0.0001 / 0.00001 at epochs 0 / 20 / 40" : "schedule mismatch");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-wsolab-cli>\n");
        return 2;
    }
    g_cli = argv[1];

    criterion_anchors();
    criterion_init_values();
    criterion_round_trip();
    criterion_gradients();
    criterion_metrics();
    criteria_grid_and_window();
    criterion_persistence();
    criterion_schedule();

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
