#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wsolab {

struct TrainHyper {
    double base_lr = 0.001;
    double decay_factor = 10.0;
    int decay_every = 20;  // epochs
    int epochs = 60;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
};

// Named view over one parameter array and its gradient.
struct ParamGroup {
    std::string name;
    std::vector<double>* values = nullptr;
    const std::vector<double>* grads = nullptr;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t t = 0;
};

AdamState make_adam_state(const std::vector<ParamGroup>& groups);

// Standard bias-corrected Adam update, applied in place. Throws on a
// non-finite gradient, naming the offending parameter group.
void adam_step(std::vector<ParamGroup>& groups, AdamState& state, double lr,
               const TrainHyper& hyper);

// base_lr / decay_factor^floor(epoch / decay_every), 0-based epochs.
double lr_at(int epoch, const TrainHyper& hyper);

}  // namespace wsolab
