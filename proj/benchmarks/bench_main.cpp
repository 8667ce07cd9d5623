#include "synthamt/features.hpp"
#include "synthamt/model.hpp"
#include "synthamt/renderer.hpp"
#include "synthamt/sample_bank.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace synthamt;

namespace {

// minimal additive one-shot so the benchmarks need no external assets
OneShot bench_oneshot(int pitch, int t) {
    OneShot s;
    s.pitch = pitch;
    s.timbre_id = "b" + std::to_string(t);
    s.group = InstrumentGroup::keyboard;
    s.samples.resize(24000);
    double f0 = 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
    for (size_t i = 0; i < s.samples.size(); ++i) {
        double ti = double(i) / 16000.0;
        s.samples[i] = float(std::sin(2.0 * M_PI * f0 * ti) * std::exp(-ti / 0.4));
    }
    return s;
}

AudioBuffer bench_segment() {
    AudioBuffer b;
    b.sample_rate = 16000;
    b.samples.resize(features_detail::kSegmentSamples);
    for (size_t i = 0; i < b.samples.size(); ++i)
        b.samples[i] = float(0.5 * std::sin(2.0 * M_PI * 440.0 * double(i) / 16000.0));
    return b;
}

void bm_melspec(benchmark::State& state) {
    AudioBuffer audio = bench_segment();
    for (auto _ : state) benchmark::DoNotOptimize(melspec(audio));
}
BENCHMARK(bm_melspec)->Unit(benchmark::kMillisecond);

void bm_render_segment(benchmark::State& state) {
    SampleBank bank;
    for (int t = 0; t < 2; ++t)
        for (int p = 48; p <= 72; ++p) bank.add(bench_oneshot(p, t));
    MixedTimbre timbre(bank, "b0", "b1", 0.8);
    RenderConfig cfg;
    NoteList notes;
    for (int i = 0; i < 8; ++i)
        notes.notes.push_back({50 + 2 * i, 0.3 * i, 0.3 * i + 0.25, 90, 1});
    notes.duration_s = 2.56;
    uint64_t seed = 0;
    for (auto _ : state) {
        Rng rng(seed++);
        benchmark::DoNotOptimize(render_segment(notes, timbre, cfg, rng));
    }
}
BENCHMARK(bm_render_segment)->Unit(benchmark::kMillisecond);

void bm_encoder_forward(benchmark::State& state) {
    nn::ModelConfig cfg;
    cfg.embed = int(state.range(0));
    cfg.ff = cfg.embed * 2;
    cfg.heads = 4;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    Rng rng(1);
    nn::Params params = nn::init_params(cfg, rng);
    MelSegment mel = melspec(bench_segment());
    nn::NoGradGuard g;
    for (auto _ : state) benchmark::DoNotOptimize(nn::encode_mel(mel, params));
}
BENCHMARK(bm_encoder_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
