#include "sril/objectives.hpp"

#include <cmath>

#include "sril/ops.hpp"

namespace sril {

double ChannelMask::activation_rate(std::size_t layer) const {
    const auto& m = layers.at(layer);
    if (m.empty()) return 0.0;
    double s = 0.0;
    for (auto b : m) s += b;
    return s / static_cast<double>(m.size());
}

std::vector<double> ChannelMask::activation_rates() const {
    std::vector<double> r;
    r.reserve(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) r.push_back(activation_rate(l));
    return r;
}

Tensor lsc_loss(const Tensor& yhat, const std::vector<int>& labels, const Tensor& eta_raw,
                double margin) {
    if (yhat.shape().size() != 2)
        throw TensorError("lsc_loss: scores must be (B,C), got " + shape_str(yhat.shape()));
    const int B = yhat.shape()[0], C = yhat.shape()[1];
    if (C < 2) throw TensorError("lsc_loss: needs at least 2 classes, got " + std::to_string(C));
    if (static_cast<int>(labels.size()) != B)
        throw TensorError("lsc_loss: label count " + std::to_string(labels.size()) + " vs batch " +
                          std::to_string(B));
    for (int y : labels)
        if (y < 0 || y >= C) throw TensorError("lsc_loss: label " + std::to_string(y) + " out of range");

    const double eta_v = eta_raw.item();
    const double eta = std::abs(eta_v);
    const double eta_sign = eta_v > 0.0 ? 1.0 : (eta_v < 0.0 ? -1.0 : 0.0);
    const auto& Y = yhat.data();

    double loss = 0.0;
    std::vector<double> hinge_arg(B);
    for (int i = 0; i < B; ++i) {
        const int y = labels[i];
        double mx = -1e300;
        for (int j = 0; j < C; ++j)
            if (j != y) mx = std::max(mx, eta * Y[i * C + j]);
        double z = 0.0;
        for (int j = 0; j < C; ++j)
            if (j != y) z += std::exp(eta * Y[i * C + j] - mx);
        const double lse = mx + std::log(z);
        hinge_arg[i] = lse - eta * (Y[i * C + y] - margin);
        if (hinge_arg[i] > 0.0) loss += hinge_arg[i];
    }
    loss /= B;

    return make_op({1}, {loss}, {yhat, eta_raw},
                   [B, C, labels, margin, eta, eta_sign, hinge_arg](Node& n) {
                       const double g = n.grad[0] / B;
                       const auto& Y = n.inputs[0]->value;
                       auto& gY = n.inputs[0]->grad;
                       auto& gEta = n.inputs[1]->grad;
                       for (int i = 0; i < B; ++i) {
                           if (hinge_arg[i] <= 0.0) continue;  // hinge subgradient 0 at the kink
                           const int y = labels[i];
                           double mx = -1e300;
                           for (int j = 0; j < C; ++j)
                               if (j != y) mx = std::max(mx, eta * Y[i * C + j]);
                           double z = 0.0;
                           for (int j = 0; j < C; ++j)
                               if (j != y) z += std::exp(eta * Y[i * C + j] - mx);
                           double d_eta = -(Y[i * C + y] - margin);
                           for (int j = 0; j < C; ++j) {
                               if (j == y) continue;
                               const double p = std::exp(eta * Y[i * C + j] - mx) / z;
                               gY[i * C + j] += g * eta * p;
                               d_eta += p * Y[i * C + j];
                           }
                           gY[i * C + y] -= g * eta;
                           gEta[0] += g * eta_sign * d_eta;
                       }
                   });
}

namespace {

void check_taps(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 3)
        throw TensorError(std::string(op) + ": tap must be (B,C,S), got " + shape_str(a.shape()));
    if (a.shape() != b.shape())
        throw TensorError(std::string(op) + ": tap shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

// Normalized channel vector; rows below the eps norm map to zero.
void normalize_channel(const double* z, int S, double* out) {
    double s = 0.0;
    for (int k = 0; k < S; ++k) s += z[k] * z[k];
    const double nrm = std::sqrt(s);
    if (nrm < kNormalizeEps) {
        for (int k = 0; k < S; ++k) out[k] = 0.0;
    } else {
        for (int k = 0; k < S; ++k) out[k] = z[k] / nrm;
    }
}

}  // namespace

FdChannelResult fd_channel_values(const Tensor& tap_new, const Tensor& tap_old) {
    check_taps("fd_channel_values", tap_new, tap_old);
    const int B = tap_new.shape()[0], C = tap_new.shape()[1], S = tap_new.shape()[2];
    FdChannelResult res;
    res.per_channel.assign(C, 0.0);
    std::vector<double> u(S), v(S);
    const auto& Zn = tap_new.data();
    const auto& Zo = tap_old.data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            normalize_channel(&Zn[(b * C + c) * S], S, u.data());
            normalize_channel(&Zo[(b * C + c) * S], S, v.data());
            double d = 0.0;
            for (int k = 0; k < S; ++k) d += (u[k] - v[k]) * (u[k] - v[k]);
            res.per_channel[c] += d;
        }
    for (double& d : res.per_channel) {
        d /= B;
        res.total += d;
    }
    return res;
}

Tensor channel_fd_loss(const Tensor& tap_new, const Tensor& tap_old,
                       const std::vector<double>& weights) {
    check_taps("channel_fd_loss", tap_new, tap_old);
    const int B = tap_new.shape()[0], C = tap_new.shape()[1], S = tap_new.shape()[2];
    if (static_cast<int>(weights.size()) != C)
        throw TensorError("channel_fd_loss: weights size " + std::to_string(weights.size()) +
                          " vs channels " + std::to_string(C));
    FdChannelResult fd = fd_channel_values(tap_new, tap_old);
    double loss = 0.0;
    for (int c = 0; c < C; ++c) loss += weights[c] * fd.per_channel[c];

    return make_op({1}, {loss}, {tap_new, tap_old}, [B, C, S, weights](Node& n) {
        const double g = n.grad[0] / B;
        const auto& Zn = n.inputs[0]->value;
        const auto& Zo = n.inputs[1]->value;
        std::vector<double> u(S), v(S);
        // d||u - v||^2 / dz = (2/||z||) * ((u - v) - u * u.(u - v)); zero rows pass no gradient
        auto accumulate = [&](const std::vector<double>& Z, const std::vector<double>& uu,
                              const std::vector<double>& other, std::vector<double>& gZ,
                              std::size_t base, double w) {
            double s = 0.0;
            for (int k = 0; k < S; ++k) s += Z[base + k] * Z[base + k];
            const double nrm = std::sqrt(s);
            if (nrm < kNormalizeEps) return;
            double udot = 0.0;
            for (int k = 0; k < S; ++k) udot += uu[k] * (uu[k] - other[k]);
            for (int k = 0; k < S; ++k)
                gZ[base + k] += g * w * 2.0 / nrm * ((uu[k] - other[k]) - uu[k] * udot);
        };
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                if (weights[c] == 0.0) continue;
                const std::size_t base = static_cast<std::size_t>(b * C + c) * S;
                normalize_channel(&Zn[base], S, u.data());
                normalize_channel(&Zo[base], S, v.data());
                accumulate(Zn, u, v, n.inputs[0]->grad, base, weights[c]);
                accumulate(Zo, v, u, n.inputs[1]->grad, base, weights[c]);
            }
    });
}

std::vector<std::vector<double>> fd_channel_grads(const Tensor& tap_new, const Tensor& tap_old) {
    check_taps("fd_channel_grads", tap_new, tap_old);
    const int B = tap_new.shape()[0], C = tap_new.shape()[1], S = tap_new.shape()[2];
    std::vector<std::vector<double>> grads(C, std::vector<double>(static_cast<std::size_t>(B) * S, 0.0));
    std::vector<double> u(S), v(S);
    const auto& Zn = tap_new.data();
    const auto& Zo = tap_old.data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = static_cast<std::size_t>(b * C + c) * S;
            double s = 0.0;
            for (int k = 0; k < S; ++k) s += Zn[base + k] * Zn[base + k];
            const double nrm = std::sqrt(s);
            if (nrm < kNormalizeEps) continue;
            normalize_channel(&Zn[base], S, u.data());
            normalize_channel(&Zo[base], S, v.data());
            double udot = 0.0;
            for (int k = 0; k < S; ++k) udot += u[k] * (u[k] - v[k]);
            for (int k = 0; k < S; ++k)
                grads[c][static_cast<std::size_t>(b) * S + k] =
                    2.0 / (B * nrm) * ((u[k] - v[k]) - u[k] * udot);
        }
    return grads;
}

ChannelMask gfd_mask(const std::vector<FeatureTap>& taps_new_data,
                     const std::vector<Tensor>& taps_old_model,
                     const std::vector<std::vector<double>>& cls_tap_grads) {
    if (taps_new_data.size() != taps_old_model.size() ||
        taps_new_data.size() != cls_tap_grads.size())
        throw TensorError("gfd_mask: layer count mismatch");
    ChannelMask mask;
    for (std::size_t l = 0; l < taps_new_data.size(); ++l) {
        const Tensor& tap = taps_new_data[l].value;
        check_taps("gfd_mask", tap, taps_old_model[l]);
        const int B = tap.shape()[0], C = tap.shape()[1], S = tap.shape()[2];
        const auto& gcls = cls_tap_grads[l];
        if (gcls.size() != tap.data().size())
            throw TensorError("gfd_mask: cls grad size mismatch at layer " + std::to_string(l));
        auto gkd = fd_channel_grads(tap, taps_old_model[l]);
        std::vector<std::uint8_t> m(C, 0);
        for (int c = 0; c < C; ++c) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int b = 0; b < B; ++b)
                for (int k = 0; k < S; ++k) {
                    const double a = gkd[c][static_cast<std::size_t>(b) * S + k];
                    const double bb = gcls[(b * C + c) * S + k];
                    dot += a * bb;
                    na += a * a;
                    nb += bb * bb;
                }
            double cosv = 0.0;
            if (std::sqrt(na) >= kMaskGradEps && std::sqrt(nb) >= kMaskGradEps)
                cosv = dot / (std::sqrt(na) * std::sqrt(nb));
            m[c] = cosv >= 0.0 ? 1 : 0;
        }
        mask.layers.push_back(std::move(m));
    }
    return mask;
}

double gfd_loss_value(const ChannelMask& mask, const std::vector<std::vector<double>>& fd_new,
                      const std::vector<std::vector<double>>& fd_old) {
    double total = 0.0;
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        const auto& m = mask.layers[l];
        for (std::size_t c = 0; c < m.size(); ++c) {
            if (l < fd_new.size() && c < fd_new[l].size() && m[c]) total += fd_new[l][c];
            if (l < fd_old.size() && c < fd_old[l].size() && !m[c]) total += fd_old[l][c];
        }
    }
    return total;
}

double lambda_gfd_t(double lambda_gfd, int n_seen, int n_task) {
    if (n_task < 1) throw TensorError("lambda_gfd_t: task size must be >= 1");
    if (n_seen < n_task) throw TensorError("lambda_gfd_t: n_seen must be >= n_task");
    return lambda_gfd * std::sqrt(static_cast<double>(n_seen) / n_task);
}

}  // namespace sril
