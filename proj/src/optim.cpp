#include "wsolab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace wsolab {

AdamState make_adam_state(const std::vector<ParamGroup>& groups) {
    AdamState state;
    state.m.reserve(groups.size());
    state.v.reserve(groups.size());
    for (const auto& g : groups) {
        state.m.emplace_back(g.values->size(), 0.0);
        state.v.emplace_back(g.values->size(), 0.0);
    }
    return state;
}

void adam_step(std::vector<ParamGroup>& groups, AdamState& state, double lr,
               const TrainHyper& hyper) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (state.m.size() != groups.size())
        throw std::invalid_argument("optimizer state does not match parameter groups");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        auto& params = *groups[gi].values;
        const auto& grads = *groups[gi].grads;
        if (grads.size() != params.size() || state.m[gi].size() != params.size())
            throw std::invalid_argument("gradient shape mismatch in group '" + groups[gi].name + "'");
        auto& m = state.m[gi];
        auto& v = state.v[gi];
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter group '" +
                                         groups[gi].name + "'");
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + hyper.eps_adam);
        }
    }
}

double lr_at(int epoch, const TrainHyper& hyper) {
    if (epoch < 0 || epoch >= hyper.epochs)
        throw std::out_of_range("epoch out of range for the training schedule");
    const int k = epoch / hyper.decay_every;
    return hyper.base_lr / std::pow(hyper.decay_factor, static_cast<double>(k));
}

}  // namespace wsolab
