#include <benchmark/benchmark.h>

#include <vector>

#include "sril/data.hpp"
#include "sril/model.hpp"
#include "sril/objectives.hpp"
#include "sril/ops.hpp"
#include "sril/rng.hpp"
#include "sril/trainer.hpp"

using namespace sril;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, bool grad = false) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.normal();
    return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    RngStream rng(1);
    Tensor a = random_tensor({n, n}, rng);
    Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv2dForward(benchmark::State& state) {
    const int hw = static_cast<int>(state.range(0));
    RngStream rng(2);
    Tensor x = random_tensor({8, 16, hw, hw}, rng);
    Tensor w = random_tensor({32, 16, 3, 3}, rng);
    Tensor b = random_tensor({32}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b).data().data());
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
    const int hw = static_cast<int>(state.range(0));
    RngStream rng(3);
    Tensor x = random_tensor({8, 16, hw, hw}, rng, true);
    Tensor w = random_tensor({32, 16, 3, 3}, rng, true);
    Tensor b = random_tensor({32}, rng, true);
    for (auto _ : state) {
        Tensor loss = sum(conv2d(x, w, b));
        backward(loss);
        benchmark::DoNotOptimize(w.grad().data());
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(16);

void BM_MlpForwardBackward(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    RngStream rng(4);
    BackboneConfig cfg;
    cfg.arch = "mlp-s";
    cfg.input_dim = 8;
    Model m = make_model(cfg, 16, 10, 0.6, rng);
    Tensor x = random_tensor({batch, 8}, rng);
    std::vector<int> labels(batch);
    for (int i = 0; i < batch; ++i) labels[i] = i % 16;
    for (auto _ : state) {
        Tensor z = m.forward_with_taps(x).first;
        Tensor loss = lsc_loss(lsc_logits(m.head, z), labels, m.head.eta_raw, m.head.margin);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
    // one full incremental task step pipeline on a small blobs problem
    BlobsConfig bc;
    bc.classes = 4;
    bc.dim = 8;
    bc.train_per_class = 32;
    bc.test_per_class = 2;
    bc.seed = 5;
    Dataset ds = make_blobs(bc).first;
    RngStream rng(6);
    BackboneConfig cfg;
    cfg.arch = "mlp-s";
    cfg.input_dim = 8;
    Model base = make_model(cfg, 2, 10, 0.6, rng);

    std::vector<int> idx, labels;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        idx.push_back(static_cast<int>(i));
        labels.push_back(ds.labels[i]);
    }
    SRILConfig mc;
    mc.epochs = 1;
    mc.batch_size = 128;
    const TaskState st = make_task_state(1, 2, 4, mc);
    for (auto _ : state) {
        ModelPair pair;
        pair.old_model = snapshot(base);
        pair.new_model = base.clone();
        RngStream erng(7);
        expand_head(pair.new_model.head, 2, erng);
        TaskLog log = train_task(pair, ds, idx, labels, mc, st, 9);
        benchmark::DoNotOptimize(log.steps.size());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
