#include "wsolab/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace wsolab {

namespace {

void check_input(const ScoredLabels& sl) {
    if (sl.scores.size() != sl.labels.size())
        throw std::invalid_argument("scores/labels size mismatch");
    if (sl.scores.empty()) throw std::invalid_argument("empty input");
    for (int l : sl.labels)
        if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
}

}  // namespace

double roc_auc(const ScoredLabels& sl) {
    check_input(sl);
    const std::size_t n = sl.scores.size();
    std::size_t n_pos = 0;
    for (int l : sl.labels) n_pos += static_cast<std::size_t>(l);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("AUC undefined: single-class input");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sl.scores[a] < sl.scores[b]; });

    // rank sum of positives with midranks for ties
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (sl.labels[order[k]] == 1) pos_rank_sum += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double average_precision(const ScoredLabels& sl) {
    check_input(sl);
    const std::size_t n = sl.scores.size();
    std::size_t n_pos = 0;
    for (int l : sl.labels) n_pos += static_cast<std::size_t>(l);
    if (n_pos == 0) throw std::invalid_argument("AP undefined: no positives");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sl.scores[a] > sl.scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && sl.scores[order[j]] == sl.scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (sl.labels[order[k]] == 1)
                ++tp;
            else
                ++fp;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

}  // namespace wsolab
