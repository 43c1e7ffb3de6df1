#include "wsolab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "binio.hpp"
#include "wsolab/errors.hpp"
#include "wsolab/metrics.hpp"
#include "wsolab/rng.hpp"

namespace wsolab {

namespace {

constexpr char kCkptMagic[8] = {'W', 'S', 'O', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint16_t kCkptVersion = 1;

// 12-bit HU convention for full-range normalization.
constexpr double kHuMin = -1024.0;
constexpr double kHuSpan = 4095.0;

std::pair<WindowSetting, WindowSetting> task_presets(Task task) {
    if (task == Task::Hemorrhage) return {preset("brain"), preset("subdural")};
    return {preset("bone"), preset("abdomen")};
}

ExperimentVariant make_variant(InputMode mode, WindowFnKind kind,
                               std::vector<WindowSetting> settings, std::string name,
                               std::string fn_label, std::string init_label) {
    ExperimentVariant v;
    v.mode = mode;
    v.kind = kind;
    v.settings = std::move(settings);
    v.name = std::move(name);
    v.windowing_function = std::move(fn_label);
    v.initialization = std::move(init_label);
    return v;
}

}  // namespace

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<ExperimentVariant> table_variants(Task task) {
    const auto [s1, s2] = task_presets(task);
    const std::vector<WindowSetting> both = {s1, s2};
    std::vector<ExperimentVariant> v;
    v.push_back(make_variant(InputMode::FullRange, WindowFnKind::Linear, {}, "full_range", "-", "-"));
    v.push_back(make_variant(InputMode::FixedWindow, WindowFnKind::Linear, {s1}, "fixed_s1", "-", "S1"));
    v.push_back(make_variant(InputMode::FixedWindow, WindowFnKind::Linear, {s2}, "fixed_s2", "-", "S2"));
    v.push_back(make_variant(InputMode::FixedWindow, WindowFnKind::Linear, both, "fixed_s1s2", "-", "S1+S2"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Linear, {s1}, "wso_linear_s1", "linear", "S1"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Linear, {s2}, "wso_linear_s2", "linear", "S2"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Linear, both, "wso_linear_s1s2", "linear", "S1+S2"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Sigmoid, {s1}, "wso_sigmoid_s1", "sigmoid", "S1"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Sigmoid, {s2}, "wso_sigmoid_s2", "sigmoid", "S2"));
    v.push_back(make_variant(InputMode::Wso, WindowFnKind::Sigmoid, both, "wso_sigmoid_s1s2", "sigmoid", "S1+S2"));
    return v;
}

ExperimentVariant variant_by_name(Task task, const std::string& id) {
    auto variants = table_variants(task);
    for (auto& v : variants)
        if (v.name == id) return v;
    if (!id.empty() && id.find_first_not_of("0123456789") == std::string::npos) {
        const std::size_t idx = std::stoul(id);
        if (idx < variants.size()) return variants[idx];
    }
    std::string names;
    for (const auto& v : variants) names += (names.empty() ? "" : ", ") + v.name;
    throw std::invalid_argument("unknown variant '" + id + "' (valid: " + names + ")");
}

Tensor4 prepare_input(const ExperimentVariant& variant, const HuImage& img,
                      const DisplayRange& d) {
    // WSO variants consume raw single-channel HU; the layer fans out to
    // channel_count() itself.
    const int C = variant.mode == InputMode::Wso ? 1 : variant.channel_count();
    Tensor4 out(1, C, img.height, img.width);
    const std::size_t ps = out.plane_size();
    switch (variant.mode) {
        case InputMode::FullRange: {
            double* o = out.plane(0, 0);
            for (std::size_t i = 0; i < ps; ++i)
                o[i] = std::clamp((img.values[i] - kHuMin) / kHuSpan, 0.0, 1.0);
            break;
        }
        case InputMode::FixedWindow: {
            for (int c = 0; c < C; ++c) {
                const auto& s = variant.settings[static_cast<std::size_t>(c)];
                const double w = window_slope(WindowFnKind::Linear, s, d);
                const double b = window_offset(WindowFnKind::Linear, s, d);
                double* o = out.plane(0, c);
                for (std::size_t i = 0; i < ps; ++i)
                    o[i] = std::clamp(w * img.values[i] + b, 0.0, d.u) / d.u;
            }
            break;
        }
        case InputMode::Wso: {
            double* o = out.plane(0, 0);
            std::copy(img.values.begin(), img.values.end(), o);
            break;
        }
    }
    return out;
}

namespace {

// Stacks prepared single-sample tensors into one batch.
Tensor4 stack(const std::vector<Tensor4>& inputs, const std::vector<std::size_t>& idx) {
    const Tensor4& first = inputs[idx[0]];
    Tensor4 batch(static_cast<int>(idx.size()), first.c, first.h, first.w);
    const std::size_t per = first.size();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(inputs[idx[i]].v.begin(), inputs[idx[i]].v.end(), batch.v.begin() + i * per);
    return batch;
}

struct ModelParams {
    DeskNet net;
    std::vector<double> wso_w, wso_b;  // empty for non-WSO variants
};

WsoLayer layer_from(const ExperimentVariant& variant, const DisplayRange& d,
                    const std::vector<double>& w, const std::vector<double>& b) {
    WsoLayer layer;
    layer.kind = variant.kind;
    layer.d = d;
    layer.channels.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) layer.channels[i] = {w[i], b[i]};
    return layer;
}

std::vector<double> model_logits(const ExperimentVariant& variant, const DisplayRange& d,
                                 const ModelParams& p, const Tensor4& batch) {
    if (variant.mode == InputMode::Wso) {
        const auto layer = layer_from(variant, d, p.wso_w, p.wso_b);
        const auto activated = wso_forward(layer, batch);
        return desknet_forward(p.net, activated).first;
    }
    return desknet_forward(p.net, batch).first;
}

}  // namespace

std::pair<TrainedModel, TrainHistory> train_model(const ExperimentVariant& variant,
                                                  const DatasetSplit& split,
                                                  const TrainHyper& hyper, std::uint64_t seed) {
    if (split.train.empty() || split.validation.empty())
        throw std::invalid_argument("train and validation splits must be non-empty");

    const DisplayRange d;
    Rng rng(seed);

    ModelParams params;
    params.net = init_desknet(variant.channel_count(), rng);
    if (variant.mode == InputMode::Wso) {
        const auto layer = init_from_settings(variant.kind, d, variant.settings);
        for (const auto& ch : layer.channels) {
            params.wso_w.push_back(ch.w);
            params.wso_b.push_back(ch.b);
        }
    }

    std::vector<Tensor4> train_inputs, val_inputs;
    std::vector<double> train_labels, val_labels;
    for (const auto& s : split.train) {
        train_inputs.push_back(prepare_input(variant, s.image, d));
        train_labels.push_back(static_cast<double>(s.label));
    }
    for (const auto& s : split.validation) {
        val_inputs.push_back(prepare_input(variant, s.image, d));
        val_labels.push_back(static_cast<double>(s.label));
    }

    WsoGradients wso_grads;
    DeskNetGrads net_grads = zero_like(params.net);
    std::vector<ParamGroup> groups;
    if (variant.mode == InputMode::Wso) {
        wso_grads.dw.assign(params.wso_w.size(), 0.0);
        wso_grads.db.assign(params.wso_b.size(), 0.0);
        groups.push_back({"wso_w", &params.wso_w, &wso_grads.dw});
        groups.push_back({"wso_b", &params.wso_b, &wso_grads.db});
    }
    groups.push_back({"conv1_w", &params.net.conv1_w, &net_grads.conv1_w});
    groups.push_back({"conv1_b", &params.net.conv1_b, &net_grads.conv1_b});
    groups.push_back({"conv2_w", &params.net.conv2_w, &net_grads.conv2_w});
    groups.push_back({"conv2_b", &params.net.conv2_b, &net_grads.conv2_b});
    groups.push_back({"fc_w", &params.net.fc_w, &net_grads.fc_w});
    groups.push_back({"fc_b", &params.net.fc_b, &net_grads.fc_b});
    AdamState adam = make_adam_state(groups);

    const std::size_t n_train = train_inputs.size();
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    ModelParams best;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double lr = lr_at(epoch, hyper);
        rng.shuffle(order);

        double train_loss_sum = 0.0;
        for (std::size_t start = 0, bi = 0; start < n_train;
             start += static_cast<std::size_t>(hyper.batch_size), ++bi) {
            const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(hyper.batch_size));
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor4 batch = stack(train_inputs, idx);
            std::vector<double> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_labels[idx[i]];

            std::vector<double> logits;
            std::optional<Tensor4> activated;
            ForwardTape tape;
            if (variant.mode == InputMode::Wso) {
                const auto layer = layer_from(variant, d, params.wso_w, params.wso_b);
                activated = wso_forward(layer, batch);
                std::tie(logits, tape) = desknet_forward(params.net, *activated);
            } else {
                std::tie(logits, tape) = desknet_forward(params.net, batch);
            }

            auto [loss, dlogits] = bce_loss(logits, labels);
            if (!std::isfinite(loss))
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(bi));
            train_loss_sum += loss * static_cast<double>(idx.size());

            auto [ngrads, dinput] = desknet_backward(params.net, tape, dlogits);
            net_grads = std::move(ngrads);
            if (variant.mode == InputMode::Wso) {
                const auto layer = layer_from(variant, d, params.wso_w, params.wso_b);
                auto [wgrads, din0] = wso_backward(layer, batch, dinput);
                (void)din0;
                wso_grads = std::move(wgrads);
            }
            // groups hold pointers into params/grads; refresh after the moves
            std::size_t gi = 0;
            if (variant.mode == InputMode::Wso) {
                groups[gi++].grads = &wso_grads.dw;
                groups[gi++].grads = &wso_grads.db;
            }
            groups[gi++].grads = &net_grads.conv1_w;
            groups[gi++].grads = &net_grads.conv1_b;
            groups[gi++].grads = &net_grads.conv2_w;
            groups[gi++].grads = &net_grads.conv2_b;
            groups[gi++].grads = &net_grads.fc_w;
            groups[gi++].grads = &net_grads.fc_b;
            adam_step(groups, adam, lr, hyper);
        }

        EpochStats stats;
        stats.train_loss = train_loss_sum / static_cast<double>(n_train);

        // validation
        double val_loss_sum = 0.0;
        ScoredLabels sl;
        for (std::size_t start = 0; start < val_inputs.size();
             start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end =
                std::min(val_inputs.size(), start + static_cast<std::size_t>(hyper.batch_size));
            std::vector<std::size_t> idx(end - start);
            std::iota(idx.begin(), idx.end(), start);
            Tensor4 batch = stack(val_inputs, idx);
            std::vector<double> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = val_labels[idx[i]];
            const auto logits = model_logits(variant, d, params, batch);
            val_loss_sum += bce_loss(logits, labels).first * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < logits.size(); ++i) {
                sl.scores.push_back(sigmoid(logits[i]));
                sl.labels.push_back(static_cast<int>(labels[i]));
            }
        }
        stats.val_loss = val_loss_sum / static_cast<double>(val_inputs.size());
        if (!std::isfinite(stats.val_loss))
            throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
        try {
            stats.val_ap = average_precision(sl);
            stats.val_auc = roc_auc(sl);
        } catch (const std::invalid_argument&) {
            stats.val_ap = std::numeric_limits<double>::quiet_NaN();
            stats.val_auc = std::numeric_limits<double>::quiet_NaN();
        }
        history.push_back(stats);

        if (stats.val_loss < best_val_loss) {
            best_val_loss = stats.val_loss;
            best_epoch = epoch;
            best = params;
        }
    }

    TrainedModel model;
    model.variant = variant;
    model.d = d;
    model.net = std::move(best.net);
    if (variant.mode == InputMode::Wso)
        model.wso = layer_from(variant, d, best.wso_w, best.wso_b);
    model.selected_epoch = best_epoch;
    model.selection_val_loss = best_val_loss;
    return {std::move(model), std::move(history)};
}

std::vector<double> score_samples(const TrainedModel& model, std::span<const Sample> samples) {
    ModelParams params;
    params.net = model.net;
    if (model.wso) {
        for (const auto& ch : model.wso->channels) {
            params.wso_w.push_back(ch.w);
            params.wso_b.push_back(ch.b);
        }
    }
    std::vector<Tensor4> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples) inputs.push_back(prepare_input(model.variant, s.image, model.d));

    std::vector<double> scores;
    scores.reserve(samples.size());
    constexpr std::size_t kEvalBatch = 64;
    for (std::size_t start = 0; start < inputs.size(); start += kEvalBatch) {
        const std::size_t end = std::min(inputs.size(), start + kEvalBatch);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto logits = model_logits(model.variant, model.d, params, stack(inputs, idx));
        for (double z : logits) scores.push_back(sigmoid(z));
    }
    return scores;
}

std::pair<double, double> evaluate(const TrainedModel& model, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
    ScoredLabels sl;
    sl.scores = score_samples(model, samples);
    for (const auto& s : samples) sl.labels.push_back(s.label);
    return {average_precision(sl), roc_auc(sl)};
}

std::vector<GridRow> run_grid(Task task, const DatasetSplit& split, const TrainHyper& hyper,
                              std::uint64_t seed) {
    const auto variants = table_variants(task);
    std::vector<GridRow> rows(variants.size());

    int threads = 1;
    if (const char* env = std::getenv("WSO_LAB_THREADS")) {
        threads = std::max(1, std::atoi(env));
        threads = std::min<int>(threads, static_cast<int>(variants.size()));
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= variants.size()) return;
            const auto& variant = variants[i];
            GridRow row;
            row.variant = variant.name;
            row.windowing_function = variant.windowing_function;
            row.initialization = variant.initialization;
            try {
                auto [model, history] = train_model(variant, split, hyper, seed + i);
                std::tie(row.ap, row.auc) = evaluate(model, split.test);
                row.selected_epoch = model.selected_epoch;
                if (model.wso) {
                    const auto settings = settings_from_layer(*model.wso);
                    std::string s;
                    for (const auto& w : settings) {
                        if (!s.empty()) s += ';';
                        s += fmt6(w.level) + ":" + fmt6(w.width);
                    }
                    row.learned_windows = s;
                }
                row.ok = true;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            rows[i] = std::move(row);
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rows;
}

void write_grid_csv(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "variant,windowing_function,initialization,ap,auc,selected_epoch,learned_windows\n";
    for (const auto& r : rows) {
        os << r.variant << ',' << r.windowing_function << ',' << r.initialization << ',';
        if (r.ok)
            os << fmt6(r.ap) << ',' << fmt6(r.auc) << ',' << r.selected_epoch << ','
               << r.learned_windows;
        else
            os << ",,,";
        os << '\n';
    }
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "epoch,train_loss,val_loss,val_ap,val_auc\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        os << e << ',' << fmt6(history[e].train_loss) << ',' << fmt6(history[e].val_loss) << ','
           << fmt6(history[e].val_ap) << ',' << fmt6(history[e].val_auc) << '\n';
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

void write_section(std::ostream& os, const std::string& name, const std::vector<double>& data) {
    binio::write_string(os, name);
    binio::write_le<std::uint64_t>(os, data.size());
    for (double x : data) binio::write_le<double>(os, x);
}

std::vector<double> read_section(std::istream& is, const std::string& expected) {
    const auto name = binio::read_string(is, "section name");
    if (name != expected)
        throw IoError("unexpected checkpoint section '" + name + "' (expected '" + expected + "')");
    const auto count = binio::read_le<std::uint64_t>(is, "section size");
    std::vector<double> data(count);
    for (auto& x : data) x = binio::read_le<double>(is, "section payload");
    return data;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kCkptMagic, sizeof kCkptMagic);
    binio::write_le<std::uint16_t>(os, kCkptVersion);

    binio::write_string(os, model.variant.name);
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(model.variant.mode));
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(model.variant.kind));
    binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(model.variant.settings.size()));
    for (const auto& s : model.variant.settings) {
        binio::write_le<double>(os, s.level);
        binio::write_le<double>(os, s.width);
    }
    binio::write_string(os, model.variant.windowing_function);
    binio::write_string(os, model.variant.initialization);
    binio::write_le<double>(os, model.d.u);
    binio::write_le<double>(os, model.d.eps);
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.net.in_channels));
    binio::write_le<std::int32_t>(os, model.selected_epoch);
    binio::write_le<double>(os, model.selection_val_loss);

    binio::write_le<std::uint8_t>(os, model.wso ? 1 : 0);
    if (model.wso) {
        std::vector<double> w, b;
        for (const auto& ch : model.wso->channels) {
            w.push_back(ch.w);
            b.push_back(ch.b);
        }
        write_section(os, "wso_w", w);
        write_section(os, "wso_b", b);
    }
    write_section(os, "conv1_w", model.net.conv1_w);
    write_section(os, "conv1_b", model.net.conv1_b);
    write_section(os, "conv2_w", model.net.conv2_w);
    write_section(os, "conv2_b", model.net.conv2_b);
    write_section(os, "fc_w", model.net.fc_w);
    write_section(os, "fc_b", model.net.fc_b);
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCkptMagic, sizeof kCkptMagic) != 0)
        throw IoError("bad magic in '" + path.string() + "': not a WSOCKPT1 checkpoint");
    const auto version = binio::read_le<std::uint16_t>(is, "version");
    if (version != kCkptVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    TrainedModel model;
    model.variant.name = binio::read_string(is, "variant name");
    model.variant.mode = static_cast<InputMode>(binio::read_le<std::uint8_t>(is, "input mode"));
    model.variant.kind = static_cast<WindowFnKind>(binio::read_le<std::uint8_t>(is, "window kind"));
    const auto n_settings = binio::read_le<std::uint16_t>(is, "setting count");
    for (std::uint16_t i = 0; i < n_settings; ++i) {
        WindowSetting s;
        s.level = binio::read_le<double>(is, "setting level");
        s.width = binio::read_le<double>(is, "setting width");
        model.variant.settings.push_back(s);
    }
    model.variant.windowing_function = binio::read_string(is, "windowing function label");
    model.variant.initialization = binio::read_string(is, "initialization label");
    model.d.u = binio::read_le<double>(is, "display upper limit");
    model.d.eps = binio::read_le<double>(is, "display margin");
    const auto in_channels = binio::read_le<std::uint32_t>(is, "input channels");
    model.selected_epoch = binio::read_le<std::int32_t>(is, "selected epoch");
    model.selection_val_loss = binio::read_le<double>(is, "selection loss");

    const auto has_wso = binio::read_le<std::uint8_t>(is, "wso flag");
    if (has_wso) {
        const auto w = read_section(is, "wso_w");
        const auto b = read_section(is, "wso_b");
        if (w.size() != b.size()) throw IoError("inconsistent WSO sections");
        WsoLayer layer;
        layer.kind = model.variant.kind;
        layer.d = model.d;
        for (std::size_t i = 0; i < w.size(); ++i) layer.channels.push_back({w[i], b[i]});
        model.wso = std::move(layer);
    }
    model.net.in_channels = static_cast<int>(in_channels);
    model.net.conv1_w = read_section(is, "conv1_w");
    model.net.conv1_b = read_section(is, "conv1_b");
    model.net.conv2_w = read_section(is, "conv2_w");
    model.net.conv2_b = read_section(is, "conv2_b");
    model.net.fc_w = read_section(is, "fc_w");
    model.net.fc_b = read_section(is, "fc_b");
    return model;
}

}  // namespace wsolab
