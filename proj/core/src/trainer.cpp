#include "sril/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "sril/optim.hpp"
#include "sril/ops.hpp"
#include "sril/rng.hpp"

namespace sril {

DistillMode distill_mode_from_string(const std::string& s) {
    if (s == "none") return DistillMode::none;
    if (s == "sfd") return DistillMode::sfd;
    if (s == "gfd") return DistillMode::gfd;
    throw TensorError("unknown distill mode: " + s);
}

std::string to_string(DistillMode m) {
    switch (m) {
        case DistillMode::none: return "none";
        case DistillMode::sfd: return "sfd";
        case DistillMode::gfd: return "gfd";
    }
    return "?";
}

void SRILConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw TensorError("config: alpha must be in [0,1]");
    if (lambda_th < 0.0) throw TensorError("config: lambda_th must be >= 0");
    if (lambda_gfd < 0.0) throw TensorError("config: lambda_gfd must be >= 0");
    if (epochs < 1) throw TensorError("config: epochs must be >= 1");
    if (batch_size < 1) throw TensorError("config: batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw TensorError("config: lr0 must be positive");
    if (K < 1) throw TensorError("config: K must be >= 1");
}

double delta_threshold(double lambda_th, int n_task, int n_seen) {
    if (n_task < 1) throw TensorError("delta_threshold: n_task must be >= 1");
    if (n_seen < n_task) throw TensorError("delta_threshold: n_seen must be >= n_task");
    return lambda_th * static_cast<double>(n_task) * n_task / n_seen;
}

TaskState make_task_state(int t, int n_task, int n_seen, const SRILConfig& cfg) {
    TaskState st;
    st.t = t;
    st.n_task = n_task;
    st.n_seen = n_seen;
    st.delta = delta_threshold(cfg.lambda_th, n_task, n_seen);
    st.lambda_eff = lambda_gfd_t(cfg.lambda_gfd, n_seen, n_task);
    return st;
}

double confidence(const Model& model, const Tensor& batch, const std::vector<int>& labels) {
    if (labels.empty()) throw TensorError("confidence: empty sample set");
    Tensor scores = model.logits(batch);
    const int B = scores.shape()[0], C = scores.shape()[1];
    const double eta = model.head.eta();
    double acc = 0.0;
    for (int i = 0; i < B; ++i) {
        double mx = -1e300;
        for (int c = 0; c < C; ++c) mx = std::max(mx, eta * scores.data()[i * C + c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(eta * scores.data()[i * C + c] - mx);
        acc += std::exp(eta * scores.data()[i * C + labels[i]] - mx) / z;
    }
    return acc / B;
}

double cwi_gate(double conf_old, double conf_new, double delta, double alpha) {
    return (conf_old - conf_new >= delta) ? alpha : 1.0;
}

void cwi_apply(Model& new_model, const Model& old_model, double beta) {
    auto& nb = new_model.backbone.params();
    const auto& ob = old_model.backbone.params();
    if (nb.size() != ob.size()) throw TensorError("cwi_apply: backbone parameter count mismatch");
    for (std::size_t p = 0; p < nb.size(); ++p) {
        if (nb[p].shape() != ob[p].shape())
            throw TensorError("cwi_apply: parameter " + std::to_string(p) + " shape mismatch " +
                              shape_str(nb[p].shape()) + " vs " + shape_str(ob[p].shape()));
        auto& w = nb[p].mutable_data();
        const auto& wo = ob[p].data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = beta * w[i] + (1.0 - beta) * wo[i];
    }
    if (new_model.head.embed_dim != old_model.head.embed_dim ||
        new_model.head.K != old_model.head.K ||
        new_model.head.num_classes < old_model.head.num_classes)
        throw TensorError("cwi_apply: head layout mismatch");
    const std::size_t old_rows =
        static_cast<std::size_t>(old_model.head.num_classes) * old_model.head.K;
    auto& pr = new_model.head.proxies.mutable_data();
    const auto& pro = old_model.head.proxies.data();
    const int D = new_model.head.embed_dim;
    for (std::size_t i = 0; i < old_rows * D; ++i) pr[i] = beta * pr[i] + (1.0 - beta) * pro[i];
    auto& eta = new_model.head.eta_raw.mutable_data();
    eta[0] = beta * eta[0] + (1.0 - beta) * old_model.head.eta_raw.data()[0];
}

namespace {

std::vector<std::vector<double>> snapshot_params(const Model& m) {
    std::vector<std::vector<double>> out;
    for (const auto& p : m.parameters()) out.push_back(p.data());
    return out;
}

}  // namespace

TaskLog train_task(ModelPair& pair, const Dataset& train, const std::vector<int>& sample_indices,
                   const std::vector<int>& head_labels, const SRILConfig& cfg, const TaskState& state,
                   std::uint64_t rng_seed, TrainObserver* observer) {
    cfg.validate();
    if (sample_indices.size() != head_labels.size())
        throw TensorError("train_task: index/label count mismatch");
    const bool has_old = state.t > 0;
    const int first_new = state.n_seen - state.n_task;
    const int num_layers = pair.new_model.backbone.num_stages();

    Model& model = pair.new_model;
    auto params = model.parameters();
    std::vector<std::uint8_t> decay_mask(params.size(), 1);
    decay_mask.back() = 0;  // eta_raw: decaying the temperature just flattens the loss
    SgdState sgd;
    RngStream rng(derive_seed(rng_seed, "shuffle"));
    TaskLog log;

    std::vector<int> order(sample_indices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr0);
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<int> new_idx, old_idx;
            std::vector<int> new_lab, old_lab;
            for (std::size_t i = start; i < end; ++i) {
                const int s = order[i];
                if (head_labels[s] >= first_new) {
                    new_idx.push_back(sample_indices[s]);
                    new_lab.push_back(head_labels[s]);
                } else {
                    old_idx.push_back(sample_indices[s]);
                    old_lab.push_back(head_labels[s]);
                }
            }
            const int B = static_cast<int>(end - start);

            StepRecord rec;
            rec.step = step;
            rec.lr = lr;

            // (1) confidence gate on the batch's old-class samples
            if (has_old && !old_idx.empty()) {
                Tensor xb_old = train.batch(old_idx);
                rec.conf_old = confidence(pair.old_model, xb_old, old_lab);
                rec.conf_new = confidence(model, xb_old, old_lab);
                const double beta = cwi_gate(rec.conf_old, rec.conf_new, state.delta, cfg.alpha);
                if (cfg.cwi_enabled && beta != 1.0) {
                    rec.gate_fired = true;
                    if (observer) {
                        auto before = snapshot_params(model);
                        cwi_apply(model, pair.old_model, beta);
                        observer->on_cwi(step, before, snapshot_params(model));
                    } else {
                        cwi_apply(model, pair.old_model, beta);
                    }
                }
            }

            if (observer) observer->after_gate(step, rec.gate_fired, model);

            // (2)+(3) forward, mask, total loss
            Tensor cls;
            Tensor new_scores, old_scores;
            std::vector<FeatureTap> taps_new, taps_old;
            if (!new_idx.empty()) {
                auto [z, taps] = model.forward_with_taps(train.batch(new_idx));
                taps_new = std::move(taps);
                new_scores = lsc_logits(model.head, z);
            }
            if (!old_idx.empty()) {
                auto [z, taps] = model.forward_with_taps(train.batch(old_idx));
                taps_old = std::move(taps);
                old_scores = lsc_logits(model.head, z);
            }
            Tensor cls_new, cls_old;
            if (!new_idx.empty())
                cls_new = lsc_loss(new_scores, new_lab, model.head.eta_raw, model.head.margin);
            if (!old_idx.empty())
                cls_old = lsc_loss(old_scores, old_lab, model.head.eta_raw, model.head.margin);
            if (cls_new.defined() && cls_old.defined())
                cls = add(scale(cls_new, static_cast<double>(new_idx.size()) / B),
                          scale(cls_old, static_cast<double>(old_idx.size()) / B));
            else
                cls = cls_new.defined() ? cls_new : cls_old;

            Tensor total = cls;
            if (has_old && cfg.distill_mode != DistillMode::none) {
                // frozen-model taps (recorded nothing on the tape)
                std::vector<Tensor> om_new, om_old;
                if (!new_idx.empty())
                    for (auto& t : pair.old_model.forward_with_taps(train.batch(new_idx)).second)
                        om_new.push_back(t.value);
                if (!old_idx.empty())
                    for (auto& t : pair.old_model.forward_with_taps(train.batch(old_idx)).second)
                        om_old.push_back(t.value);

                ChannelMask mask;
                if (cfg.distill_mode == DistillMode::gfd) {
                    if (!new_idx.empty()) {
                        // classification gradients at the taps, new-class portion only
                        backward(cls_new);
                        std::vector<std::vector<double>> cls_grads;
                        for (const auto& tap : taps_new) cls_grads.push_back(tap.value.grad());
                        mask = gfd_mask(taps_new, om_new, cls_grads);
                    } else {
                        // no new-class samples: mask stays zero, old term keeps full weight
                        for (int l = 0; l < num_layers; ++l)
                            mask.layers.emplace_back(model.backbone.stage_channels(l), 0);
                    }
                } else {  // sfd: plain FD on both partitions
                    for (int l = 0; l < num_layers; ++l)
                        mask.layers.emplace_back(model.backbone.stage_channels(l), 1);
                }
                rec.mask_rate = mask.activation_rates();

                Tensor gfd;
                for (int l = 0; l < num_layers; ++l) {
                    std::vector<double> w_new(mask.layers[l].begin(), mask.layers[l].end());
                    std::vector<double> w_old(w_new.size());
                    for (std::size_t c = 0; c < w_new.size(); ++c)
                        w_old[c] = cfg.distill_mode == DistillMode::sfd ? 1.0 : 1.0 - w_new[c];
                    if (!new_idx.empty()) {
                        Tensor term = channel_fd_loss(taps_new[l].value, om_new[l], w_new);
                        gfd = gfd.defined() ? add(gfd, term) : term;
                    }
                    if (!old_idx.empty()) {
                        Tensor term = channel_fd_loss(taps_old[l].value, om_old[l], w_old);
                        gfd = gfd.defined() ? add(gfd, term) : term;
                    }
                }
                if (gfd.defined()) {
                    rec.gfd_loss = gfd.item();
                    total = add(cls, scale(gfd, state.lambda_eff));
                }
            }
            rec.cls_loss = cls.item();

            if (!std::isfinite(total.item()))
                throw TrainingError(step, "non-finite loss at step " + std::to_string(step));

            // (4) backward + SGD
            backward(total);
            sgd_step(params, sgd, lr, cfg.momentum, cfg.weight_decay, &decay_mask);
            model.head.renormalize_proxies();

            if (observer) observer->after_step(step, model);
            log.steps.push_back(std::move(rec));
        }
    }
    return log;
}

}  // namespace sril
