#include <benchmark/benchmark.h>

#include "biliscope/pipeline.hpp"

using namespace biliscope;

namespace {

GrayImage phantom_image(int size) {
    PhantomSpec spec;
    spec.size = size;
    spec.duct_width_px = size / 20;
    spec.noise_sigma = 10.0;
    spec.haze_strength = 0.3;
    return generate(spec).image;
}

void BM_ChanVeseStep(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const GrayImage img = phantom_image(size);
    const ChanVeseParams p;
    CvState s = initial_state(init_level_set(default_seed(size, size), size, size), img, p);
    for (auto _ : state) {
        s = cv_step(s, img, p);
        benchmark::DoNotOptimize(s.energy);
    }
    state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_ChanVeseStep)->Arg(128)->Arg(256)->Arg(512);

void BM_Glcm(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    PhantomSpec spec;
    spec.size = size;
    const PhantomSample s = generate(spec);
    for (auto _ : state) {
        const Glcm g = glcm(s.image, s.tree_mask, 8);
        benchmark::DoNotOptimize(glcm_stats(g).contrast);
    }
}
BENCHMARK(BM_Glcm)->Arg(256)->Arg(512);

void BM_Dehaze(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const GrayImage img = phantom_image(size);
    const DehazeParams p;
    for (auto _ : state) benchmark::DoNotOptimize(dehaze(img, p));
    state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Dehaze)->Arg(256)->Arg(512);

void BM_DenoiserInfer(benchmark::State& state) {
    const int depth = static_cast<int>(state.range(0));
    const ResidualNet net = ResidualNet::make(depth, 16, 1);
    const GrayImage img = phantom_image(64);
    for (auto _ : state) benchmark::DoNotOptimize(infer(net, img));
}
BENCHMARK(BM_DenoiserInfer)->Arg(5)->Arg(17)->Unit(benchmark::kMillisecond);

void BM_ConnectedComponents(benchmark::State& state) {
    PhantomSpec spec;
    spec.size = 512;
    const PhantomSample s = generate(spec);
    for (auto _ : state) benchmark::DoNotOptimize(connected_components(s.tree_mask));
}
BENCHMARK(BM_ConnectedComponents);

void BM_RunCase(benchmark::State& state) {
    PipelineConfig cfg = PipelineConfig::defaults();
    cfg.working_size = static_cast<int>(state.range(0));
    const Pipeline pipeline(cfg);
    const Bytes bytes = save_pgm(phantom_image(cfg.working_size));
    for (auto _ : state) benchmark::DoNotOptimize(pipeline.run_case(bytes));
}
BENCHMARK(BM_RunCase)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
