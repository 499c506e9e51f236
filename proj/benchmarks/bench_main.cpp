#include <benchmark/benchmark.h>

#include <random>

#include "curvepose/curvnet.hpp"
#include "curvepose/features.hpp"
#include "curvepose/pose.hpp"
#include "curvepose/synth.hpp"

namespace {

using namespace curvepose;

const std::vector<TargetImage>& library() {
    static const std::vector<TargetImage> lib = [] {
        std::vector<TargetImage> v;
        for (int i = 0; i < 5; ++i) v.push_back(make_procedural_target(i, 1));
        return v;
    }();
    return lib;
}

const SceneSample& scene() {
    static const SceneSample s = render(generate_scene(library(), SceneDistribution{}, 3, 0), library());
    return s;
}

void BM_Render(benchmark::State& state) {
    SceneDistribution dist;
    dist.supersample = static_cast<int>(state.range(0));
    const SceneConfig cfg = generate_scene(library(), dist, 3, 0);
    for (auto _ : state) benchmark::DoNotOptimize(render(cfg, library()));
}
BENCHMARK(BM_Render)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_SiftScene(benchmark::State& state) {
    const GrayImage gray = to_gray(scene().image);
    for (auto _ : state) benchmark::DoNotOptimize(extract_features(gray));
}
BENCHMARK(BM_SiftScene)->Unit(benchmark::kMillisecond);

void BM_MatchTarget(benchmark::State& state) {
    const DescriptorSet a = extract_features(to_gray(scene().image));
    const DescriptorSet b = extract_features(to_gray(library()[0].pixels));
    for (auto _ : state) benchmark::DoNotOptimize(ratio_filter(match_knn(a.descriptors, b.descriptors), 0.8));
}
BENCHMARK(BM_MatchTarget)->Unit(benchmark::kMicrosecond);

void BM_CurvNetForward(benchmark::State& state) {
    const NetConfig cfg = state.range(0) == 0 ? NetConfig::small() : NetConfig::large();
    CurvNet net(cfg);
    net.initialize(1);
    const nn::Tensor<float> x({cfg.input_channels, cfg.input_height, cfg.input_width}, 0.5f);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_CurvNetForward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_CurvNetBackward(benchmark::State& state) {
    CurvNet net(NetConfig::small());
    net.initialize(1);
    const nn::Tensor<float> x({3, 60, 60}, 0.5f);
    auto grads = net.zero_gradients();
    for (auto _ : state) {
        CurvNet::Cache cache;
        net.forward(x, cache);
        net.backward(cache, 1.0f, grads);
    }
}
BENCHMARK(BM_CurvNetBackward)->Unit(benchmark::kMicrosecond);

void BM_Ransac(benchmark::State& state) {
    const auto K = CameraIntrinsics::scaled_reference(640, 480);
    const RigidPose truth(euler_to_quaternion(Vec3(1.4, 0.2, -0.1)), Vec3(0.1, -0.2, 5.0));
    const CylinderModel cyl{1.0, 1.3, 1.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Correspondence> corr;
    const int n = static_cast<int>(state.range(0));
    for (int i = 0; i < n; ++i) {
        const Vec3 X = label_to_cylinder({u(rng) * cyl.label_width, u(rng)}, cyl);
        Vec2 px = project_point(K, transform_point(truth, X));
        if (i % 10 < 3) px = Vec2(u(rng) * 640, u(rng) * 480);
        corr.push_back({X, px});
    }
    for (auto _ : state) {
        std::mt19937_64 r(1);
        benchmark::DoNotOptimize(ransac_pnp(corr, K, {}, r));
    }
}
BENCHMARK(BM_Ransac)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
