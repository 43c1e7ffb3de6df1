#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "wsolab/data.hpp"
#include "wsolab/errors.hpp"
#include "wsolab/gradcheck.hpp"
#include "wsolab/metrics.hpp"
#include "wsolab/train.hpp"
#include "wsolab/windowing.hpp"

namespace fs = std::filesystem;
using namespace wsolab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_pgm(const DisplayImage& img, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.gray.data()),
             static_cast<std::streamsize>(img.gray.size()));
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

struct WindowArgs {
    std::string fn = "linear";
    std::string preset_name;
    double wl = 0.0, ww = 0.0;
    bool has_wl = false, has_ww = false;
    double u = 255.0, eps = 1.0;

    WindowSetting setting() const {
        const bool explicit_window = has_wl || has_ww;
        if (!preset_name.empty() && explicit_window)
            throw UsageError("give either --preset or --wl/--ww, not both");
        if (!preset_name.empty()) return preset(preset_name);
        if (!(has_wl && has_ww)) throw UsageError("either --preset or both --wl and --ww required");
        return {wl, ww};
    }
};

void add_window_args(CLI::App* cmd, WindowArgs& args) {
    cmd->add_option("--fn", args.fn, "window function: linear or sigmoid");
    cmd->add_option("--preset", args.preset_name, "preset name (brain, subdural, bone, abdomen)");
    cmd->add_option("--wl", args.wl, "window level, HU")->each([&](const std::string&) { args.has_wl = true; });
    cmd->add_option("--ww", args.ww, "window width, HU")->each([&](const std::string&) { args.has_ww = true; });
    cmd->add_option("--u", args.u, "display upper limit (default 255)");
    cmd->add_option("--eps", args.eps, "sigmoid margin (default 1)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"window-setting-optimization lab: trainable CT windowing front end"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    bool quiet = false;
    app.add_option("--seed", seed, "global RNG seed (default 0)");
    app.add_flag("--quiet", quiet, "suppress progress output on stderr");

    // window
    auto* window = app.add_subcommand("window", "render a HURAW1 image to an 8-bit PGM");
    WindowArgs window_args;
    std::string window_input, window_output;
    window->add_option("--input", window_input, "input .huraw file")->required();
    add_window_args(window, window_args);
    window->add_option("--output", window_output, "output .pgm file")->required();

    // curve
    auto* curve = app.add_subcommand("curve", "emit window-function samples as CSV on stdout");
    WindowArgs curve_args;
    double curve_from = 0.0, curve_to = 0.0, curve_step = 1.0;
    add_window_args(curve, curve_args);
    curve->add_option("--from", curve_from, "start HU")->required();
    curve->add_option("--to", curve_to, "end HU")->required();
    curve->add_option("--step", curve_step, "HU step (default 1)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic phantom dataset");
    std::string gen_task = "hemorrhage", gen_out_dir;
    int gen_cases = 100;
    double gen_pos_frac = 0.5;
    gen->add_option("--task", gen_task, "hemorrhage or stone");
    gen->add_option("--cases", gen_cases, "number of cases (default 100)");
    gen->add_option("--pos-frac", gen_pos_frac, "positive case fraction (default 0.5)");
    gen->add_option("--out-dir", gen_out_dir, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train one experiment variant");
    std::string train_variant, train_task = "hemorrhage", train_data, train_out, train_history;
    int train_epochs = 60;
    train->add_option("--variant", train_variant, "variant name or 0-based index")->required();
    train->add_option("--task", train_task, "hemorrhage or stone");
    train->add_option("--data", train_data, "dataset manifest")->required();
    train->add_option("--out", train_out, "output checkpoint path")->required();
    train->add_option("--history", train_history, "history CSV path (default <out>.history.csv)");
    train->add_option("--epochs", train_epochs, "training epochs (default 60)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string eval_model, eval_data;
    eval->add_option("--model", eval_model, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "dataset manifest")->required();

    // grid
    auto* grid = app.add_subcommand("grid", "train and evaluate the ten-variant grid");
    std::string grid_task = "hemorrhage", grid_data, grid_out;
    int grid_epochs = 60;
    grid->add_option("--task", grid_task, "hemorrhage or stone");
    grid->add_option("--data", grid_data, "dataset manifest")->required();
    grid->add_option("--out", grid_out, "grid report CSV path")->required();
    grid->add_option("--epochs", grid_epochs, "training epochs (default 60)");

    // inspect-wso
    auto* inspect = app.add_subcommand("inspect-wso", "report learned windows of a checkpoint");
    std::string inspect_model;
    inspect->add_option("--model", inspect_model, "checkpoint path")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand(window)) {
            const auto setting = window_args.setting();
            const DisplayRange d{window_args.u, window_args.eps};
            const auto kind = window_fn_from_string(window_args.fn);
            auto img = read_hu_file(window_input);
            write_pgm(render_display(img, kind, setting, d), window_output);
        } else if (app.got_subcommand(curve)) {
            if (!(curve_from < curve_to) || !(curve_step > 0.0))
                throw UsageError("need --from < --to and --step > 0");
            const auto setting = curve_args.setting();
            const DisplayRange d{curve_args.u, curve_args.eps};
            const auto kind = window_fn_from_string(curve_args.fn);
            std::cout << "x,f\n";
            for (double x = curve_from; x <= curve_to + 1e-12; x += curve_step)
                std::cout << fmt6(x) << ',' << fmt6(apply_window(x, kind, setting, d)) << '\n';
        } else if (app.got_subcommand(gen)) {
            const auto samples =
                generate_dataset(PhantomSpec{}, task_from_string(gen_task), gen_cases, gen_pos_frac, seed);
            const auto manifest = write_dataset(samples, gen_out_dir);
            std::cout << manifest.string() << '\n';
        } else if (app.got_subcommand(train)) {
            const auto task = task_from_string(train_task);
            const auto variant = variant_by_name(task, train_variant);
            const auto samples = read_manifest(train_data);
            const auto split = split_by_case(samples, {0.6, 0.2, 0.2}, seed);
            TrainHyper hyper;
            hyper.epochs = train_epochs;
            if (!quiet)
                std::cerr << "training " << variant.name << " on " << split.train.size()
                          << " slices\n";
            auto [model, history] = train_model(variant, split, hyper, seed);
            save_checkpoint(model, train_out);
            const fs::path hist_path =
                train_history.empty() ? fs::path(train_out + ".history.csv") : fs::path(train_history);
            write_history_csv(history, hist_path);
            if (!quiet)
                std::cerr << "selected epoch " << model.selected_epoch << ", validation loss "
                          << fmt6(model.selection_val_loss) << '\n';
        } else if (app.got_subcommand(eval)) {
            const auto model = load_checkpoint(eval_model);
            const auto samples = read_manifest(eval_data);
            const auto [ap, auc] = evaluate(model, samples);
            std::cout << fmt6(ap) << ',' << fmt6(auc) << '\n';
        } else if (app.got_subcommand(grid)) {
            const auto task = task_from_string(grid_task);
            const auto samples = read_manifest(grid_data);
            const auto split = split_by_case(samples, {0.6, 0.2, 0.2}, seed);
            TrainHyper hyper;
            hyper.epochs = grid_epochs;
            const auto rows = run_grid(task, split, hyper, seed);
            write_grid_csv(rows, grid_out);
            for (const auto& r : rows)
                if (!r.ok) std::cerr << "variant " << r.variant << " failed: " << r.error << '\n';
            if (!quiet) std::cerr << "grid report written to " << grid_out << '\n';
        } else if (app.got_subcommand(inspect)) {
            const auto model = load_checkpoint(inspect_model);
            if (!model.wso) throw UsageError("model has no WSO layer");
            const auto settings = settings_from_layer(*model.wso);
            std::cout << "channel,kind,w,b,wl,ww\n";
            for (std::size_t c = 0; c < settings.size(); ++c)
                std::cout << c << ',' << to_string(model.wso->kind) << ','
                          << fmt6(model.wso->channels[c].w) << ',' << fmt6(model.wso->channels[c].b)
                          << ',' << fmt6(settings[c].level) << ',' << fmt6(settings[c].width) << '\n';
        } else if (app.got_subcommand(gradcheck)) {
            double worst = 0.0;
            for (int i = 0; i < 10; ++i) {
                const auto kind = i % 2 ? WindowFnKind::Sigmoid : WindowFnKind::Linear;
                const auto config = make_gradcheck_config(seed * 1000 + static_cast<std::uint64_t>(i),
                                                          kind, /*with_wso=*/true);
                worst = std::max(worst, finite_diff_check(config));
            }
            std::cout << "max relative gradient error: " << fmt6(worst) << '\n';
            if (worst > 1e-3) return kExitCheckFailure;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCheckFailure;
    }
    return kExitOk;
}
