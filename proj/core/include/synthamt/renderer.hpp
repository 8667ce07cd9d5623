#pragma once

#include "synthamt/audio.hpp"
#include "synthamt/midi.hpp"
#include "synthamt/rng.hpp"
#include "synthamt/sample_bank.hpp"

#include <array>
#include <map>
#include <optional>

namespace synthamt {

struct RenderConfig {
    int sample_rate = 16000;
    double segment_s = 2.56;
    double limit_prob = 0.8;
    double limit_lo = 0.5, limit_hi = 1.0;
    std::map<InstrumentGroup, std::pair<double, double>> release_ranges = {
        {InstrumentGroup::keyboard, {0.1, 1.0}},
        {InstrumentGroup::organ, {0.1, 1.0}},
        {InstrumentGroup::mallet, {0.1, 1.0}},
        {InstrumentGroup::brass, {0.1, 1.0}},
        {InstrumentGroup::synth_vocal, {0.1, 1.0}},
        {InstrumentGroup::strings, {0.8, 1.0}},
        {InstrumentGroup::reed, {0.8, 1.0}},
        {InstrumentGroup::flute, {0.8, 1.0}},
        {InstrumentGroup::guitar, {0.1, 0.5}},
        {InstrumentGroup::bass, {0.1, 0.2}},
    };
    int window_retries = 8; // note-containing window search before accepting silence
};

// log(1 + v/127) / log 2, strictly increasing, (0, 1]
double velocity_amplitude(int velocity);

// One-shot trimmed to the note length plus a linearly faded release tail of
// duration ~ U[lo, hi] for the timbre's group; amplitude-scaled by velocity.
// A note longer than the sample uses the full sample with no synthetic tail.
std::vector<float> render_note(const NoteEvent& note, const MixedTimbre& timbre,
                               const RenderConfig& cfg, Rng& rng);

// Raw overlay-add, no normalization or limiting (tested for linearity).
// Draw order: per-note release, in NoteList order.
AudioBuffer render_segment_raw(const NoteList& notes, const MixedTimbre& timbre,
                               const RenderConfig& cfg, Rng& rng);

// Overlay-add, peak-normalize, then with limit_prob: clip at ~U[0.5, 1.0]
// and renormalize. Draw order: per-note releases, limiter coin, threshold.
AudioBuffer render_segment(const NoteList& notes, const MixedTimbre& timbre,
                           const RenderConfig& cfg, Rng& rng);

struct SegmentExample {
    AudioBuffer audio;
    NoteList notes;              // segment-local
    std::set<int> held_over, continuing;
    // sampled parameters, for the sidecar
    std::string main_timbre, sub_timbre;
    double alpha = 0.0;
    int midi_index = -1;
    double window_start_s = 0.0;
    bool limited = false;
    double limit_threshold = 0.0;
};

// (program, notes) pool filtered to the drawn timbre's group; a random
// 2.56-s window containing at least one note when possible.
// Draw order: timbre (main, sub, alpha), MIDI index, window starts, then
// render_segment draws.
SegmentExample synth_example(const std::vector<std::pair<int, NoteList>>& midi_pool,
                             const SampleBank& bank, const RenderConfig& cfg, Rng& rng);

} // namespace synthamt
