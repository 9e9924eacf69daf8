#pragma once

#include <cstdint>
#include <vector>

#include "sril/model.hpp"
#include "sril/tensor.hpp"

namespace sril {

// Per-layer, per-channel binary mask; recomputed each mini-batch and treated
// as a constant within the step (no gradient flows through it).
struct ChannelMask {
    std::vector<std::vector<std::uint8_t>> layers;

    double activation_rate(std::size_t layer) const;
    std::vector<double> activation_rates() const;
};

struct LossBundle {
    double cls = 0.0;
    double gfd = 0.0;
    double total = 0.0;
    std::vector<double> mask_rate;
};

// NCA-style hinged proxy loss, averaged over the batch:
//   [ -log( exp(eta*(yhat_y - margin)) / sum_{i != y} exp(eta*yhat_i) ) ]_+
// eta is |eta_raw|. Throws if the head has fewer than two classes.
Tensor lsc_loss(const Tensor& yhat, const std::vector<int>& labels, const Tensor& eta_raw,
                double margin);

struct FdChannelResult {
    std::vector<double> per_channel;  // d_c, already divided by batch size
    double total = 0.0;               // sum over channels
};

// d_c = (1/B) * sum_b || norm(z_new[b,c,:]) - norm(z_old[b,c,:]) ||^2,
// norm = per-sample per-channel L2 normalization over the spatial extent.
FdChannelResult fd_channel_values(const Tensor& tap_new, const Tensor& tap_old);

// Differentiable weighted form: sum_c weights[c] * d_c. Gradients flow into
// tap_new (and tap_old when it participates in the tape); weights are
// constants.
Tensor channel_fd_loss(const Tensor& tap_new, const Tensor& tap_old,
                       const std::vector<double>& weights);

// Analytic gradient of d_c with respect to tap_new, one flattened (B*S)
// vector per channel. This is the g_kd used for mask construction, so no
// extra backward pass is needed.
std::vector<std::vector<double>> fd_channel_grads(const Tensor& tap_new, const Tensor& tap_old);

// Mask entry (l,c) is 1 iff cos(g_kd, g_cls) >= 0, where both gradients are
// flattened over batch and spatial dims of the new-class sub-batch. A vector
// with norm below 1e-12 yields cos := 0, which keeps the channel masked in
// (the inclusive ">= 0" branch).
// cls_tap_grads[l] is d(L_cls)/d(tap_l), flattened (B*C*S).
ChannelMask gfd_mask(const std::vector<FeatureTap>& taps_new_data,
                     const std::vector<Tensor>& taps_old_model,
                     const std::vector<std::vector<double>>& cls_tap_grads);

// Pure evaluation of the masked objective from per-channel FD values:
//   sum_{l,c} [ M_{l,c} * fd_new_{l,c} + (1 - M_{l,c}) * fd_old_{l,c} ].
double gfd_loss_value(const ChannelMask& mask, const std::vector<std::vector<double>>& fd_new,
                      const std::vector<std::vector<double>>& fd_old);

// lambda_gfd * sqrt(n_seen / n_task)
double lambda_gfd_t(double lambda_gfd, int n_seen, int n_task);

inline constexpr double kMaskGradEps = 1e-12;

}  // namespace sril
