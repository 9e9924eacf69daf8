#pragma once

#include <cstdint>
#include <vector>

#include "sril/tensor.hpp"

namespace sril {

// Classic momentum buffers, one per parameter tensor, shape-matched lazily.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v.
// Decay enters the gradient (non-decoupled). Throws on non-finite gradients.
// decay_mask, when given, has one entry per parameter; zero entries get no
// weight decay (used to exempt the temperature scalar).
void sgd_step(std::vector<Tensor>& params, SgdState& state, double lr, double momentum,
              double weight_decay, const std::vector<std::uint8_t>* decay_mask = nullptr);

// lr0/2 * (1 + cos(pi * epoch / total_epochs)), epoch in [0, total_epochs).
double cosine_lr(int epoch, int total_epochs, double lr0);

}  // namespace sril
