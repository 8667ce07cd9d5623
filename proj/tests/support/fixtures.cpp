#include "fixtures.hpp"

#include <cmath>

namespace synthamt::testsup {

OneShot make_oneshot(int pitch, int timbre, double dur_s) {
    static const std::vector<std::vector<double>> recipes = {
        {1.0, 0.5, 0.25, 0.125},
        {1.0, 0.0, 0.7, 0.0, 0.3},
        {1.0, 0.8, 0.6, 0.4, 0.2},
    };
    static const double taus[] = {0.4, 0.6, 0.25};

    const auto& w = recipes[size_t(timbre) % recipes.size()];
    double tau = taus[size_t(timbre) % 3];
    double f0 = 440.0 * std::pow(2.0, (pitch - 69) / 12.0);
    int rate = 16000;
    size_t n = size_t(dur_s * rate);

    OneShot shot;
    shot.sample_rate = rate;
    shot.pitch = pitch;
    shot.timbre_id = "add" + std::to_string(timbre);
    shot.group = InstrumentGroup::keyboard;
    shot.samples.resize(n, 0.0f);

    double peak = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double t = double(i) / rate;
        double v = 0.0;
        for (size_t h = 0; h < w.size(); ++h) {
            double f = f0 * double(h + 1);
            if (f >= rate / 2.0) break;
            v += w[h] * std::sin(2.0 * M_PI * f * t);
        }
        v *= std::exp(-t / tau);
        if (t < 0.005) v *= t / 0.005;
        shot.samples[i] = float(v);
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0)
        for (auto& s : shot.samples) s = float(s / peak);
    return shot;
}

SampleBank make_bank(int pitch_lo, int pitch_hi) {
    SampleBank bank;
    for (int t = 0; t < 3; ++t)
        for (int p = pitch_lo; p <= pitch_hi; ++p) bank.add(make_oneshot(p, t));
    return bank;
}

NoteList random_mono_notes(Rng& rng, double dur_s, int pitch_lo, int pitch_hi) {
    NoteList out;
    out.duration_s = dur_s;
    double t = rng.uniform(0.02, 0.15);
    while (t < dur_s - 0.2) {
        NoteEvent n;
        n.pitch = int(rng.uniform_int(pitch_lo, pitch_hi));
        n.velocity = int(rng.uniform_int(40, 110));
        n.onset_s = t;
        n.offset_s = t + rng.uniform(0.15, 0.45);
        n.program = 1;
        out.notes.push_back(n);
        t = n.offset_s + rng.uniform(0.03, 0.20);
    }
    out.sort_notes();
    return out;
}

std::vector<std::pair<int, NoteList>> make_midi_pool(uint64_t seed, size_t count,
                                                     double dur_s) {
    std::vector<std::pair<int, NoteList>> pool;
    for (size_t i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, i));
        pool.emplace_back(1, random_mono_notes(rng, dur_s));
    }
    return pool;
}

} // namespace synthamt::testsup
