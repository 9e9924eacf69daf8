#pragma once

#include <vector>

#include "sril/model.hpp"

namespace sril {

// Lower-triangular accuracy record: a[k][j] is the accuracy on task j's test
// split after training task k. test_counts holds per-task test sizes so the
// all-seen accuracy at each checkpoint can be recomputed exactly.
struct AccuracyMatrix {
    std::vector<std::vector<double>> a;
    std::vector<int> test_counts;

    int num_tasks() const { return static_cast<int>(a.size()); }
    void check_complete() const;
    // accuracy over all classes seen after task k (test-count weighted)
    double all_seen(int k) const;
};

// Mean over checkpoints of the all-seen accuracy (incremental-average
// convention).
double average_accuracy(const AccuracyMatrix& m);

// At the final checkpoint K: mean over j < K of max_{k<K} a[k][j] - a[K][j].
double forgetting_measure(const AccuracyMatrix& m);

// Mean over tasks k >= 1 of reference[k] - a[k][k], where reference holds
// the unregularized run's new-task accuracies. Negative values mean the
// regularized run learned new tasks better.
double intransigence_measure(const AccuracyMatrix& m, const std::vector<double>& reference_new_task_acc);

// ||Yc' Xc||_F^2 / (||Xc' Xc||_F * ||Yc' Yc||_F) with column-centered
// inputs; n rows of p (resp. q) features. Throws on zero-variance input.
double linear_cka(const std::vector<double>& X, int n, int p, const std::vector<double>& Y, int q);

// Entry (i,j) = linear CKA between tap i of model_a and tap j of model_b on
// a fixed probe batch, taps flattened to (B, C*S).
std::vector<std::vector<double>> cka_heatmap(const Model& model_a, const Model& model_b,
                                             const Tensor& probe);

// Per-channel mean over the probe of the L2 distance between the two
// models' normalized channel features at `layer`; returned sorted ascending.
std::vector<double> channel_shift_histogram(const Model& before, const Model& after,
                                            const Tensor& probe, int layer);

}  // namespace sril
