#pragma once

#include "synthamt/renderer.hpp"
#include "synthamt/sample_bank.hpp"

#include <vector>

namespace synthamt::testsup {

// Additive-synth one-shot: harmonic stack with exponential decay and a 5 ms
// attack ramp. timbre selects one of three partial recipes.
OneShot make_oneshot(int pitch, int timbre, double dur_s = 1.5);

// Three timbres ("add0".."add2", all keyboard) sampled at every semitone.
SampleBank make_bank(int pitch_lo = 48, int pitch_hi = 84);

// Monophonic note sequence covering [0, dur_s), pitches in [lo, hi],
// inter-note gaps >= 30 ms.
NoteList random_mono_notes(Rng& rng, double dur_s, int pitch_lo = 48, int pitch_hi = 84);

// count (program 1, NoteList) windows of ~3 s each
std::vector<std::pair<int, NoteList>> make_midi_pool(uint64_t seed, size_t count,
                                                     double dur_s = 3.0);

} // namespace synthamt::testsup
