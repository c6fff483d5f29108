// Serial reference vs parallel kernels at the shapes the toy model uses
// during training (batch 8, 48x48 crops).
#include <benchmark/benchmark.h>

#include "psmt/kernels.hpp"
#include "psmt/model.hpp"
#include "psmt/rng.hpp"

namespace {

using psmt::Tensor;
using psmt::kernels::ConvGeometry;

struct ConvCase {
    ConvGeometry geom;
    int batch;
    int side;
};

// args: stage index 0..3
ConvCase conv_case(int which) {
    switch (which) {
        case 0: return {{3, 16, 3, 2, 1}, 8, 48};
        case 1: return {{16, 32, 3, 2, 1}, 8, 24};
        case 2: return {{32, 32, 3, 1, 1}, 8, 12};
        default: return {{32, 4, 1, 1, 0}, 8, 12};
    }
}

Tensor random_tensor(psmt::Shape s, std::uint64_t seed) {
    Tensor t(s);
    psmt::Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

template <auto Fn>
void run_forward(benchmark::State& state) {
    const auto c = conv_case(static_cast<int>(state.range(0)));
    const int out = c.geom.out_size(c.side);
    Tensor x = random_tensor({c.batch, c.geom.in_channels, c.side, c.side}, 1);
    Tensor w = random_tensor({1, 1, 1, static_cast<int>(c.geom.weight_size())}, 2);
    std::vector<double> b(static_cast<std::size_t>(c.geom.out_channels), 0.1);
    Tensor y({c.batch, c.geom.out_channels, out, out});
    for (auto _ : state) {
        Fn(c.geom, x, w.values(), b, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.counters["MAC/s"] = benchmark::Counter(
        static_cast<double>(y.size()) * static_cast<double>(c.geom.patch()),
        benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Fn>
void run_backward_input(benchmark::State& state) {
    const auto c = conv_case(static_cast<int>(state.range(0)));
    const int out = c.geom.out_size(c.side);
    Tensor dy = random_tensor({c.batch, c.geom.out_channels, out, out}, 3);
    Tensor w = random_tensor({1, 1, 1, static_cast<int>(c.geom.weight_size())}, 2);
    Tensor dx({c.batch, c.geom.in_channels, c.side, c.side});
    for (auto _ : state) {
        Fn(c.geom, dy, w.values(), dx);
        benchmark::DoNotOptimize(dx.data());
    }
}

template <auto Fn>
void run_backward_params(benchmark::State& state) {
    const auto c = conv_case(static_cast<int>(state.range(0)));
    const int out = c.geom.out_size(c.side);
    Tensor x = random_tensor({c.batch, c.geom.in_channels, c.side, c.side}, 1);
    Tensor dy = random_tensor({c.batch, c.geom.out_channels, out, out}, 3);
    std::vector<double> dw(c.geom.weight_size());
    std::vector<double> db(static_cast<std::size_t>(c.geom.out_channels));
    for (auto _ : state) {
        Fn(c.geom, x, dy, dw, db);
        benchmark::DoNotOptimize(dw.data());
    }
}

void model_step(benchmark::State& state, psmt::kernels::Backend backend) {
    psmt::kernels::set_backend(backend);
    psmt::SegModel model(psmt::ArchDescriptor{}, 7);
    Tensor x = random_tensor({8, 3, 48, 48}, 5);
    std::vector<double> grad(model.params().size());
    for (auto _ : state) {
        psmt::EncoderTrace et;
        psmt::DecoderTrace dt;
        Tensor z = model.encode(x, psmt::Mode::train, &et);
        Tensor logits = model.decode(z, &dt);
        Tensor dz = model.decode_backward(dt, logits, grad);
        model.encode_backward(et, dz, grad);
        benchmark::DoNotOptimize(grad.data());
    }
    psmt::kernels::set_backend(psmt::kernels::Backend::parallel);
}

}  // namespace

namespace k = psmt::kernels;

BENCHMARK(run_forward<k::serial::conv2d_forward>)->Name("conv_forward/serial")->DenseRange(0, 3);
BENCHMARK(run_forward<k::parallel::conv2d_forward>)->Name("conv_forward/parallel")->DenseRange(0, 3);
BENCHMARK(run_backward_input<k::serial::conv2d_backward_input>)
    ->Name("conv_backward_input/serial")->DenseRange(0, 3);
BENCHMARK(run_backward_input<k::parallel::conv2d_backward_input>)
    ->Name("conv_backward_input/parallel")->DenseRange(0, 3);
BENCHMARK(run_backward_params<k::serial::conv2d_backward_params>)
    ->Name("conv_backward_params/serial")->DenseRange(0, 3);
BENCHMARK(run_backward_params<k::parallel::conv2d_backward_params>)
    ->Name("conv_backward_params/parallel")->DenseRange(0, 3);
BENCHMARK_CAPTURE(model_step, serial, k::Backend::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(model_step, parallel, k::Backend::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
