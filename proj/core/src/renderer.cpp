#include "synthamt/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace synthamt {

double velocity_amplitude(int velocity) {
    if (velocity < 1 || velocity > 127)
        throw std::out_of_range("velocity_amplitude: velocity outside 1..127");
    return std::log1p(double(velocity) / 127.0) / std::log(2.0);
}

std::vector<float> render_note(const NoteEvent& note, const MixedTimbre& timbre,
                               const RenderConfig& cfg, Rng& rng) {
    const OneShot& shot = timbre.lookup(note.pitch);
    double amp = velocity_amplitude(note.velocity);

    size_t note_len = size_t(std::llround((note.offset_s - note.onset_s) * cfg.sample_rate));
    size_t sample_len = shot.samples.size();

    auto range = cfg.release_ranges.at(timbre.group());
    double release_s = rng.uniform(range.first, range.second);

    if (note_len >= sample_len) {
        // note outlasts the sample: use the full sample, no synthetic tail
        std::vector<float> out(shot.samples);
        for (float& s : out) s = float(s * amp);
        return out;
    }

    size_t tail_len = size_t(std::llround(release_s * cfg.sample_rate));
    size_t total = std::min(sample_len, note_len + tail_len);
    std::vector<float> out(total);
    for (size_t i = 0; i < total; ++i) {
        double g = amp;
        if (i >= note_len && tail_len > 0)
            g *= 1.0 - double(i - note_len) / double(tail_len);
        out[i] = float(shot.samples[i] * g);
    }
    return out;
}

AudioBuffer render_segment_raw(const NoteList& notes, const MixedTimbre& timbre,
                               const RenderConfig& cfg, Rng& rng) {
    AudioBuffer buf;
    buf.sample_rate = cfg.sample_rate;
    buf.samples.assign(size_t(std::llround(cfg.segment_s * cfg.sample_rate)), 0.0f);
    for (const NoteEvent& n : notes.notes) {
        std::vector<float> rendered = render_note(n, timbre, cfg, rng);
        size_t at = size_t(std::llround(n.onset_s * cfg.sample_rate));
        for (size_t i = 0; i < rendered.size() && at + i < buf.samples.size(); ++i)
            buf.samples[at + i] += rendered[i];
    }
    return buf;
}

namespace {

void limit_and_normalize(AudioBuffer& buf, const RenderConfig& cfg, Rng& rng,
                         bool* limited, double* threshold_out) {
    peak_normalize(buf);
    bool coin = rng.bernoulli(cfg.limit_prob);
    double thr = rng.uniform(cfg.limit_lo, cfg.limit_hi); // drawn regardless, fixed order
    if (coin) {
        float t = float(thr);
        for (float& s : buf.samples) s = std::clamp(s, -t, t);
        peak_normalize(buf);
    }
    if (limited) *limited = coin;
    if (threshold_out) *threshold_out = coin ? thr : 0.0;
}

} // namespace

AudioBuffer render_segment(const NoteList& notes, const MixedTimbre& timbre,
                           const RenderConfig& cfg, Rng& rng) {
    AudioBuffer buf = render_segment_raw(notes, timbre, cfg, rng);
    limit_and_normalize(buf, cfg, rng, nullptr, nullptr);
    return buf;
}

SegmentExample synth_example(const std::vector<std::pair<int, NoteList>>& midi_pool,
                             const SampleBank& bank, const RenderConfig& cfg, Rng& rng) {
    if (midi_pool.empty()) throw std::runtime_error("synth_example: empty MIDI pool");

    MixedTimbre timbre = bank.draw_mixed_timbre(rng);

    std::vector<size_t> candidates;
    for (size_t i = 0; i < midi_pool.size(); ++i)
        if (program_to_group(midi_pool[i].first) == timbre.group()) candidates.push_back(i);
    if (candidates.empty())
        throw std::runtime_error(std::string("synth_example: no MIDI matching group '") +
                                 group_name(timbre.group()) + "'");

    size_t idx = candidates[size_t(rng.uniform_int(0, int64_t(candidates.size()) - 1))];
    const NoteList& track = midi_pool[idx].second;

    double max_start = std::max(0.0, track.duration_s - cfg.segment_s);
    SlicedSegment seg;
    double start = 0.0;
    for (int attempt = 0; attempt < cfg.window_retries; ++attempt) {
        start = rng.uniform(0.0, max_start);
        seg = slice_notes(track, start, cfg.segment_s);
        if (!seg.notes.empty()) break;
    }

    SegmentExample ex;
    ex.main_timbre = timbre.main_id();
    ex.sub_timbre = timbre.sub_id();
    ex.alpha = timbre.alpha();
    ex.midi_index = int(idx);
    ex.window_start_s = start;
    ex.notes = seg.notes;
    ex.held_over = seg.held_over;
    ex.continuing = seg.continuing;

    ex.audio = render_segment_raw(ex.notes, timbre, cfg, rng);
    limit_and_normalize(ex.audio, cfg, rng, &ex.limited, &ex.limit_threshold);
    return ex;
}

} // namespace synthamt
