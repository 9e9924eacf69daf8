#include "sril/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sril {

void AccuracyMatrix::check_complete() const {
    if (a.empty()) throw TensorError("accuracy matrix is empty");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k].size() != k + 1)
            throw TensorError("accuracy matrix row " + std::to_string(k) + " has " +
                              std::to_string(a[k].size()) + " entries, expected " + std::to_string(k + 1));
    if (test_counts.size() != a.size())
        throw TensorError("accuracy matrix needs one test count per task");
}

double AccuracyMatrix::all_seen(int k) const {
    double correct = 0.0;
    int total = 0;
    for (int j = 0; j <= k; ++j) {
        correct += a[k][j] * test_counts[j];
        total += test_counts[j];
    }
    return total ? correct / total : 0.0;
}

double average_accuracy(const AccuracyMatrix& m) {
    m.check_complete();
    double s = 0.0;
    for (int k = 0; k < m.num_tasks(); ++k) s += m.all_seen(k);
    return s / m.num_tasks();
}

double forgetting_measure(const AccuracyMatrix& m) {
    m.check_complete();
    const int K = m.num_tasks() - 1;
    if (K < 1) throw TensorError("forgetting_measure: needs at least 2 tasks");
    double s = 0.0;
    for (int j = 0; j < K; ++j) {
        double mx = 0.0;
        for (int k = j; k < K; ++k) mx = std::max(mx, m.a[k][j]);
        s += mx - m.a[K][j];
    }
    return s / K;
}

double intransigence_measure(const AccuracyMatrix& m,
                             const std::vector<double>& reference_new_task_acc) {
    m.check_complete();
    if (reference_new_task_acc.size() != m.a.size())
        throw TensorError("intransigence_measure: reference run has " +
                          std::to_string(reference_new_task_acc.size()) + " tasks, matrix has " +
                          std::to_string(m.a.size()));
    if (m.num_tasks() < 2) throw TensorError("intransigence_measure: needs at least 2 tasks");
    double s = 0.0;
    for (int k = 1; k < m.num_tasks(); ++k) s += reference_new_task_acc[k] - m.a[k][k];
    return s / (m.num_tasks() - 1);
}

double linear_cka(const std::vector<double>& X, int n, int p, const std::vector<double>& Y, int q) {
    if (n < 2) throw TensorError("linear_cka: needs at least 2 samples");
    if (static_cast<int>(X.size()) != n * p || static_cast<int>(Y.size()) != n * q)
        throw TensorError("linear_cka: buffer sizes do not match (n,p,q)");
    auto center = [n](std::vector<double> M, int cols) {
        for (int c = 0; c < cols; ++c) {
            double mean = 0.0;
            for (int r = 0; r < n; ++r) mean += M[r * cols + c];
            mean /= n;
            for (int r = 0; r < n; ++r) M[r * cols + c] -= mean;
        }
        return M;
    };
    const std::vector<double> Xc = center(X, p);
    const std::vector<double> Yc = center(Y, q);

    // ||Yc' Xc||_F^2
    double cross = 0.0;
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int r = 0; r < n; ++r) acc += Yc[r * q + i] * Xc[r * p + j];
            cross += acc * acc;
        }
    auto self_norm = [n](const std::vector<double>& M, int cols) {
        double s = 0.0;
        for (int i = 0; i < cols; ++i)
            for (int j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int r = 0; r < n; ++r) acc += M[r * cols + i] * M[r * cols + j];
                s += acc * acc;
            }
        return std::sqrt(s);
    };
    const double nx = self_norm(Xc, p), ny = self_norm(Yc, q);
    if (nx == 0.0 || ny == 0.0) throw TensorError("linear_cka: zero-variance input");
    return cross / (nx * ny);
}

std::vector<std::vector<double>> cka_heatmap(const Model& model_a, const Model& model_b,
                                             const Tensor& probe) {
    auto taps_a = model_a.forward_with_taps(probe).second;
    auto taps_b = model_b.forward_with_taps(probe).second;
    const int L = static_cast<int>(taps_a.size());
    const int B = probe.shape()[0];
    std::vector<std::vector<double>> heat(L, std::vector<double>(L, 0.0));
    for (int i = 0; i < L; ++i) {
        const int pi = static_cast<int>(taps_a[i].value.numel()) / B;
        for (int j = 0; j < L; ++j) {
            const int pj = static_cast<int>(taps_b[j].value.numel()) / B;
            heat[i][j] = linear_cka(taps_a[i].value.data(), B, pi, taps_b[j].value.data(), pj);
        }
    }
    return heat;
}

std::vector<double> channel_shift_histogram(const Model& before, const Model& after,
                                            const Tensor& probe, int layer) {
    auto tap_b = before.forward_with_taps(probe).second.at(layer).value;
    auto tap_a = after.forward_with_taps(probe).second.at(layer).value;
    if (tap_b.shape() != tap_a.shape())
        throw TensorError("channel_shift_histogram: tap shapes differ " + shape_str(tap_b.shape()) +
                          " vs " + shape_str(tap_a.shape()));
    const int B = tap_b.shape()[0], C = tap_b.shape()[1], S = tap_b.shape()[2];
    std::vector<double> shift(C, 0.0);
    std::vector<double> u(S), v(S);
    auto normalize = [S](const double* z, double* out) {
        double s = 0.0;
        for (int k = 0; k < S; ++k) s += z[k] * z[k];
        const double nrm = std::sqrt(s);
        for (int k = 0; k < S; ++k) out[k] = nrm < kNormalizeEps ? 0.0 : z[k] / nrm;
    };
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t base = static_cast<std::size_t>(b * C + c) * S;
            normalize(&tap_b.data()[base], u.data());
            normalize(&tap_a.data()[base], v.data());
            double d = 0.0;
            for (int k = 0; k < S; ++k) d += (u[k] - v[k]) * (u[k] - v[k]);
            shift[c] += std::sqrt(d);
        }
    for (double& s : shift) s /= B;
    std::sort(shift.begin(), shift.end());
    return shift;
}

}  // namespace sril
