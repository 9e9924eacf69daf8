#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sril/data.hpp"
#include "sril/model.hpp"
#include "sril/objectives.hpp"

namespace sril {

enum class DistillMode { none, sfd, gfd };

DistillMode distill_mode_from_string(const std::string& s);
std::string to_string(DistillMode m);

struct SRILConfig {
    double alpha = 0.995;
    double lambda_th = 0.1;
    double lambda_gfd = 2.0;
    int epochs = 40;
    int batch_size = 128;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    DistillMode distill_mode = DistillMode::gfd;
    bool cwi_enabled = true;
    int K = 10;
    double margin = 0.6;
    std::uint64_t seed = 0;
    bool deterministic = true;

    void validate() const;
};

// Per-task derived quantities, recomputed at task start.
struct TaskState {
    int t = 0;
    int n_task = 0;
    int n_seen = 0;
    double delta = 0.0;       // lambda_th * (n_task)^2 / n_seen
    double lambda_eff = 0.0;  // lambda_gfd * sqrt(n_seen / n_task)
};

TaskState make_task_state(int t, int n_task, int n_seen, const SRILConfig& cfg);

// lambda_th * n_task^2 / n_seen
double delta_threshold(double lambda_th, int n_task, int n_seen);

// Mean predicted probability of the true label under softmax of eta-scaled
// class scores. Throws on an empty sample set (callers treat that as "gate
// skipped").
double confidence(const Model& model, const Tensor& batch, const std::vector<int>& labels);

// beta = alpha if conf_old - conf_new >= delta (inclusive), else 1.
double cwi_gate(double conf_old, double conf_new, double delta, double alpha);

// theta_new <- beta*theta_new + (1-beta)*theta_old over the backbone, the
// head rows of classes the old model knows, and eta. New-class proxy rows
// have no old counterpart and are left alone. Momentum buffers untouched.
void cwi_apply(Model& new_model, const Model& old_model, double beta);

struct StepRecord {
    int step = 0;
    double lr = 0.0;
    double cls_loss = 0.0;
    double gfd_loss = 0.0;
    double conf_old = std::numeric_limits<double>::quiet_NaN();
    double conf_new = std::numeric_limits<double>::quiet_NaN();
    bool gate_fired = false;
    std::vector<double> mask_rate;  // per layer; empty when no mask was built
};

struct TaskLog {
    std::vector<StepRecord> steps;
};

// Test/analysis hook into the step pipeline.
struct TrainObserver {
    virtual ~TrainObserver() = default;
    virtual void on_cwi(int step, const std::vector<std::vector<double>>& params_before,
                        const std::vector<std::vector<double>>& params_after) {
        (void)step;
        (void)params_before;
        (void)params_after;
    }
    // Called after the gate phase of every step, before any gradient work.
    virtual void after_gate(int step, bool gate_fired, const Model& model) {
        (void)step;
        (void)gate_fired;
        (void)model;
    }
    virtual void after_step(int step, const Model& model) {
        (void)step;
        (void)model;
    }
};

struct TrainingError : std::runtime_error {
    int step;
    TrainingError(int step_, const std::string& what) : std::runtime_error(what), step(step_) {}
};

// One task of the selective-regularization loop. Per mini-batch, in order:
// confidence gate + weight interpolation on the old-class partition, mask
// construction per distill mode, total loss, backward and SGD with cosine
// annealed lr. For t = 0 this degenerates to plain supervised training.
// `head_labels` are head indices; samples with label >= n_seen - n_task are
// the new-class partition.
TaskLog train_task(ModelPair& pair, const Dataset& train, const std::vector<int>& sample_indices,
                   const std::vector<int>& head_labels, const SRILConfig& cfg, const TaskState& state,
                   std::uint64_t rng_seed, TrainObserver* observer = nullptr);

}  // namespace sril
