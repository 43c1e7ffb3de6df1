#pragma once

#include <vector>

namespace wsolab {

struct ScoredLabels {
    std::vector<double> scores;
    std::vector<int> labels;  // {0, 1}
};

// Mann-Whitney statistic: P(score_pos > score_neg), ties counted 0.5.
// Throws if the input contains only one class.
double roc_auc(const ScoredLabels& sl);

// Step-wise area under the precision-recall curve with tie grouping: all
// items at an equal score cross the threshold together. Throws if there
// are no positives.
double average_precision(const ScoredLabels& sl);

}  // namespace wsolab
