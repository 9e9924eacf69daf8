#include "sril/ops.hpp"

#include <cmath>
#include <cstring>

namespace sril {

namespace {

void check(bool cond, const char* op, const std::string& detail) {
    if (!cond) throw TensorError(std::string(op) + ": " + detail);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool any_grad = false;
    for (const auto& in : inputs) {
        any_grad = any_grad || in.requires_grad();
        n->inputs.push_back(in.node());
    }
    n->requires_grad = any_grad;
    if (any_grad) n->backward_fn = std::move(backward_fn);
    return Tensor::wrap(std::move(n));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i] * n.inputs[1]->value[i];
            n.inputs[1]->grad[i] += n.grad[i] * n.inputs[0]->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[0]->grad[i] += c * n.grad[i];
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    check(bias.shape().size() == 1, "add_bias", "bias must be 1-D, got " + shape_str(bias.shape()));
    const int nb = bias.shape()[0];
    check(!x.shape().empty() && x.shape().back() == nb, "add_bias",
          "last dim of " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
    std::vector<double> out(x.data());
    const std::size_t rows = out.size() / static_cast<std::size_t>(nb);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < nb; ++j) out[r * nb + j] += bias.data()[j];
    return make_op(x.shape(), std::move(out), {x, bias}, [nb, rows](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < nb; ++j) n.inputs[1]->grad[j] += n.grad[r * nb + j];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2, "matmul",
          "expects 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    check(k == k2, "matmul", "inner dims " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const auto& A = a.data();
    const auto& B = b.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
        }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& nd) {
        auto& gA = nd.inputs[0]->grad;
        auto& gB = nd.inputs[1]->grad;
        const auto& A = nd.inputs[0]->value;
        const auto& B = nd.inputs[1]->value;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double g = nd.grad[i * n + j];
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    gA[i * k + p] += g * B[p * n + j];
                    gB[p * n + j] += g * A[i * k + p];
                }
            }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2, "matmul_nt",
          "expects 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0], k2 = b.shape()[1];
    check(k == k2, "matmul_nt", "inner dims " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const auto& A = a.data();
    const auto& B = b.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
            out[i * n + j] = acc;
        }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& nd) {
        auto& gA = nd.inputs[0]->grad;
        auto& gB = nd.inputs[1]->grad;
        const auto& A = nd.inputs[0]->value;
        const auto& B = nd.inputs[1]->value;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const double g = nd.grad[i * n + j];
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    gA[i * k + p] += g * B[j * k + p];
                    gB[j * k + p] += g * A[i * k + p];
                }
            }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data());
    for (double& v : out)
        if (v < 0.0) v = 0.0;
    return make_op(x.shape(), std::move(out), {x}, [](Node& n) {
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.inputs[0]->value[i] > 0.0) n.inputs[0]->grad[i] += n.grad[i];
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    check(x.shape().size() == 4, "conv2d", "input must be (B,C,H,W), got " + shape_str(x.shape()));
    check(w.shape().size() == 4, "conv2d", "weight must be (F,C,kh,kw), got " + shape_str(w.shape()));
    const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int F = w.shape()[0], Cw = w.shape()[1], KH = w.shape()[2], KW = w.shape()[3];
    check(C == Cw, "conv2d", "channels " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    check(bias.shape() == Shape{F}, "conv2d", "bias " + shape_str(bias.shape()) + " vs F=" + std::to_string(F));
    const int ph = KH / 2, pw = KW / 2;
    std::vector<double> out(static_cast<std::size_t>(B) * F * H * W, 0.0);
    const auto& X = x.data();
    const auto& Wt = w.data();
    auto xi = [&](int b, int c, int i, int j) { return ((b * C + c) * H + i) * W + j; };
    auto oi = [&](int b, int f, int i, int j) { return ((b * F + f) * H + i) * W + j; };
    auto wi = [&](int f, int c, int u, int v) { return ((f * C + c) * KH + u) * KW + v; };
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double acc = bias.data()[f];
                    for (int c = 0; c < C; ++c)
                        for (int u = 0; u < KH; ++u) {
                            const int ii = i + u - ph;
                            if (ii < 0 || ii >= H) continue;
                            for (int v = 0; v < KW; ++v) {
                                const int jj = j + v - pw;
                                if (jj < 0 || jj >= W) continue;
                                acc += X[xi(b, c, ii, jj)] * Wt[wi(f, c, u, v)];
                            }
                        }
                    out[oi(b, f, i, j)] = acc;
                }
    return make_op({B, F, H, W}, std::move(out), {x, w, bias},
                   [B, C, H, W, F, KH, KW, ph, pw](Node& n) {
                       auto& gX = n.inputs[0]->grad;
                       auto& gW = n.inputs[1]->grad;
                       auto& gB = n.inputs[2]->grad;
                       const auto& X = n.inputs[0]->value;
                       const auto& Wt = n.inputs[1]->value;
                       for (int b = 0; b < B; ++b)
                           for (int f = 0; f < F; ++f)
                               for (int i = 0; i < H; ++i)
                                   for (int j = 0; j < W; ++j) {
                                       const double g = n.grad[((b * F + f) * H + i) * W + j];
                                       if (g == 0.0) continue;
                                       gB[f] += g;
                                       for (int c = 0; c < C; ++c)
                                           for (int u = 0; u < KH; ++u) {
                                               const int ii = i + u - ph;
                                               if (ii < 0 || ii >= H) continue;
                                               for (int v = 0; v < KW; ++v) {
                                                   const int jj = j + v - pw;
                                                   if (jj < 0 || jj >= W) continue;
                                                   const std::size_t xidx = ((b * C + c) * H + ii) * W + jj;
                                                   const std::size_t widx = ((f * C + c) * KH + u) * KW + v;
                                                   gX[xidx] += g * Wt[widx];
                                                   gW[widx] += g * X[xidx];
                                               }
                                           }
                                   }
                   });
}

Tensor avg_pool2(const Tensor& x) {
    check(x.shape().size() == 4, "avg_pool2", "input must be (B,C,H,W), got " + shape_str(x.shape()));
    const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int Ho = H / 2, Wo = W / 2;
    check(Ho >= 1 && Wo >= 1, "avg_pool2", "spatial dims too small: " + shape_str(x.shape()));
    std::vector<double> out(static_cast<std::size_t>(B) * C * Ho * Wo, 0.0);
    const auto& X = x.data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u < 2; ++u)
                        for (int v = 0; v < 2; ++v)
                            acc += X[((b * C + c) * H + 2 * i + u) * W + 2 * j + v];
                    out[((b * C + c) * Ho + i) * Wo + j] = acc * 0.25;
                }
    return make_op({B, C, Ho, Wo}, std::move(out), {x}, [B, C, H, W, Ho, Wo](Node& n) {
        auto& gX = n.inputs[0]->grad;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const double g = 0.25 * n.grad[((b * C + c) * Ho + i) * Wo + j];
                        for (int u = 0; u < 2; ++u)
                            for (int v = 0; v < 2; ++v)
                                gX[((b * C + c) * H + 2 * i + u) * W + 2 * j + v] += g;
                    }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    check(shape_numel(shape) == x.numel(), "reshape",
          shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    return make_op(std::move(shape), std::vector<double>(x.data()), {x}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
    });
}

Tensor l2_normalize_lastdim(const Tensor& x) {
    check(!x.shape().empty(), "l2_normalize_lastdim", "scalar input");
    const int D = x.shape().back();
    const std::size_t rows = static_cast<std::size_t>(x.numel()) / D;
    std::vector<double> out(x.data().size());
    const auto& X = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < D; ++j) s += X[r * D + j] * X[r * D + j];
        const double nrm = std::sqrt(s);
        if (nrm < kNormalizeEps) {
            for (int j = 0; j < D; ++j) out[r * D + j] = 0.0;
        } else {
            for (int j = 0; j < D; ++j) out[r * D + j] = X[r * D + j] / nrm;
        }
    }
    return make_op(x.shape(), std::move(out), {x}, [D, rows](Node& n) {
        const auto& X = n.inputs[0]->value;
        auto& gX = n.inputs[0]->grad;
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int j = 0; j < D; ++j) s += X[r * D + j] * X[r * D + j];
            const double nrm = std::sqrt(s);
            if (nrm < kNormalizeEps) continue;
            double dot = 0.0;
            for (int j = 0; j < D; ++j) dot += n.grad[r * D + j] * n.value[r * D + j];
            for (int j = 0; j < D; ++j)
                gX[r * D + j] += (n.grad[r * D + j] - n.value[r * D + j] * dot) / nrm;
        }
    });
}

Tensor softmax_lastdim(const Tensor& x) {
    check(!x.shape().empty(), "softmax_lastdim", "scalar input");
    const int D = x.shape().back();
    const std::size_t rows = static_cast<std::size_t>(x.numel()) / D;
    std::vector<double> out(x.data().size());
    const auto& X = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = X[r * D];
        for (int j = 1; j < D; ++j) mx = std::max(mx, X[r * D + j]);
        double z = 0.0;
        for (int j = 0; j < D; ++j) {
            out[r * D + j] = std::exp(X[r * D + j] - mx);
            z += out[r * D + j];
        }
        for (int j = 0; j < D; ++j) out[r * D + j] /= z;
    }
    return make_op(x.shape(), std::move(out), {x}, [D, rows](Node& n) {
        auto& gX = n.inputs[0]->grad;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int j = 0; j < D; ++j) dot += n.grad[r * D + j] * n.value[r * D + j];
            for (int j = 0; j < D; ++j)
                gX[r * D + j] += n.value[r * D + j] * (n.grad[r * D + j] - dot);
        }
    });
}

Tensor log_elem(const Tensor& x) {
    std::vector<double> out(x.data());
    for (double& v : out) v = std::log(v);
    return make_op(x.shape(), std::move(out), {x}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.inputs[0]->grad[i] += n.grad[i] / n.inputs[0]->value[i];
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op({1}, {s}, {x}, [](Node& n) {
        const double g = n.grad[0];
        for (double& gv : n.inputs[0]->grad) gv += g;
    });
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op({1}, {s * inv}, {x}, [inv](Node& n) {
        const double g = n.grad[0] * inv;
        for (double& gv : n.inputs[0]->grad) gv += g;
    });
}

Tensor sum_lastdim(const Tensor& x) {
    check(x.shape().size() >= 2, "sum_lastdim", "needs rank >= 2, got " + shape_str(x.shape()));
    const int D = x.shape().back();
    const std::size_t rows = static_cast<std::size_t>(x.numel()) / D;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < D; ++j) out[r] += x.data()[r * D + j];
    return make_op(std::move(out_shape), std::move(out), {x}, [D, rows](Node& n) {
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < D; ++j) n.inputs[0]->grad[r * D + j] += n.grad[r];
    });
}

}  // namespace sril
