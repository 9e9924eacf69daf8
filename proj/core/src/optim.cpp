#include "sril/optim.hpp"

#include <cmath>
#include <numbers>

namespace sril {

void sgd_step(std::vector<Tensor>& params, SgdState& state, double lr, double momentum,
              double weight_decay, const std::vector<std::uint8_t>* decay_mask) {
    if (!(lr > 0.0)) throw TensorError("sgd_step: lr must be positive");
    if (decay_mask && decay_mask->size() != params.size())
        throw TensorError("sgd_step: decay mask needs one entry per parameter");
    if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = params[p];
        if (!param.has_grad()) continue;  // not reached by this step's loss
        const auto& g = param.grad();
        if (!all_finite(g))
            throw TensorError("sgd_step: non-finite gradient in parameter " + std::to_string(p) +
                              " of shape " + shape_str(param.shape()));
        const double wd = (decay_mask && !(*decay_mask)[p]) ? 0.0 : weight_decay;
        auto& v = state.velocity[p];
        if (v.size() != g.size()) v.assign(g.size(), 0.0);
        auto& w = param.mutable_data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            v[i] = momentum * v[i] + g[i] + wd * w[i];
            w[i] -= lr * v[i];
        }
    }
}

double cosine_lr(int epoch, int total_epochs, double lr0) {
    if (total_epochs <= 0) throw TensorError("cosine_lr: total_epochs must be positive");
    if (epoch < 0 || epoch >= total_epochs) throw TensorError("cosine_lr: epoch out of range");
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

}  // namespace sril
