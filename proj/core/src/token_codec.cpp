#include "synthamt/token_codec.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <fstream>
#include <map>

namespace synthamt {

TruncationError::TruncationError(std::vector<NoteEvent> d)
    : std::runtime_error("token sequence exceeds max_len; dropped " +
                         std::to_string(d.size()) + " note(s)"),
      dropped(std::move(d)) {}

int quantize_time_bin(double t_s) {
    // nearbyint under the default rounding mode rounds ties to even
    double b = std::nearbyint(t_s / vocab::HOP_S);
    return int(std::clamp(b, 0.0, double(vocab::TIME_BINS - 1)));
}

namespace {

// quantized [on, off) bins with a minimum one-bin length
std::pair<int, int> quantize_span(const NoteEvent& n) {
    int on = quantize_time_bin(n.onset_s);
    int off = quantize_time_bin(n.offset_s);
    if (on >= vocab::TIME_BINS - 1) on = vocab::TIME_BINS - 2;
    if (off <= on) off = on + 1;
    return {on, off};
}

} // namespace

NoteList quantize_notes(const NoteList& notes) {
    NoteList out;
    out.duration_s = notes.duration_s;
    for (const NoteEvent& n : notes.notes) {
        auto [on, off] = quantize_span(n);
        NoteEvent q = n;
        q.onset_s = on * vocab::HOP_S;
        q.offset_s = off * vocab::HOP_S;
        out.notes.push_back(q);
    }
    out.sort_notes();
    return out;
}

TokenSeq encode(const NoteList& notes, const std::set<int>& held_over,
                const std::set<int>& continuing, int max_len) {
    // bin -> (off pitches, on pitches)
    std::map<int, std::pair<std::set<int>, std::set<int>>> timeline;
    std::set<int> tie_pending = held_over;
    std::set<int> cont_pending = continuing;
    // note index responsible for each (bin, on/off, pitch) event, for the
    // truncation report
    std::map<std::tuple<int, int, int>, size_t> owner;

    for (size_t i = 0; i < notes.notes.size(); ++i) {
        const NoteEvent& n = notes.notes[i];
        if (n.pitch < 0 || n.pitch > 127)
            throw std::invalid_argument("encode: pitch out of range");
        auto [on, off] = quantize_span(n);
        // the first note of a held-over pitch starting at 0 is the tie note
        bool is_tie = tie_pending.count(n.pitch) && quantize_time_bin(n.onset_s) == 0;
        if (is_tie) {
            tie_pending.erase(n.pitch);
        } else {
            timeline[on].second.insert(n.pitch);
            owner[{on, 1, n.pitch}] = i;
        }
        // the last note of a continuing pitch ending at the segment edge
        // emits no OFF
        bool is_cont = cont_pending.count(n.pitch) &&
                       n.offset_s >= notes.duration_s - vocab::HOP_S * 0.5;
        if (is_cont) {
            cont_pending.erase(n.pitch);
        } else {
            timeline[off].first.insert(n.pitch);
            owner[{off, 0, n.pitch}] = i;
        }
    }

    TokenSeq seq;
    seq.ids.push_back(vocab::BOS);
    for (int p : held_over) seq.ids.push_back(vocab::pitch_token(p));
    seq.ids.push_back(vocab::END_TIE);

    std::set<size_t> dropped;
    for (const auto& [bin, evs] : timeline) {
        std::vector<int> chunk;
        chunk.push_back(vocab::time_token(bin));
        if (!evs.first.empty()) {
            chunk.push_back(vocab::NOTE_OFF);
            for (int p : evs.first) chunk.push_back(vocab::pitch_token(p));
        }
        if (!evs.second.empty()) {
            chunk.push_back(vocab::NOTE_ON);
            for (int p : evs.second) chunk.push_back(vocab::pitch_token(p));
        }
        if (int(seq.ids.size() + chunk.size()) + 1 > max_len || !dropped.empty()) {
            for (int p : evs.first)
                if (auto it = owner.find({bin, 0, p}); it != owner.end()) dropped.insert(it->second);
            for (int p : evs.second)
                if (auto it = owner.find({bin, 1, p}); it != owner.end()) dropped.insert(it->second);
            continue;
        }
        seq.ids.insert(seq.ids.end(), chunk.begin(), chunk.end());
    }
    if (!dropped.empty()) {
        std::vector<NoteEvent> d;
        for (size_t i : dropped) d.push_back(notes.notes[i]);
        throw TruncationError(std::move(d));
    }
    seq.ids.push_back(vocab::EOS);
    return seq;
}

DecodeResult decode(const TokenSeq& tokens, double segment_dur_s) {
    DecodeResult res;
    res.notes.duration_s = segment_dur_s;

    enum class Marker { none, on, off };
    bool in_tie = true;
    int cur_bin = 0;
    Marker marker = Marker::none;
    std::map<int, double> open; // pitch -> onset time

    auto close = [&](int pitch, double t) {
        auto it = open.find(pitch);
        if (it == open.end()) return false;
        NoteEvent n;
        n.pitch = pitch;
        n.onset_s = it->second;
        n.offset_s = std::max(t, it->second + vocab::HOP_S);
        open.erase(it);
        res.notes.notes.push_back(n);
        return true;
    };

    size_t i = 0;
    if (!tokens.ids.empty() && tokens.ids[0] == vocab::BOS) i = 1;
    for (; i < tokens.ids.size(); ++i) {
        int id = tokens.ids[i];
        if (id == vocab::EOS) break;
        if (in_tie) {
            if (id == vocab::END_TIE) { in_tie = false; continue; }
            if (vocab::is_pitch(id)) {
                int p = vocab::pitch_of(id);
                if (open.count(p)) { res.skipped++; continue; }
                open[p] = 0.0;
                res.held_over.insert(p);
                continue;
            }
            // anything else ends the tie section and is reinterpreted below
            in_tie = false;
            res.skipped++;
        }
        if (vocab::is_time(id)) {
            int b = vocab::bin_of(id);
            if (b < cur_bin) { res.skipped++; b = cur_bin; } // clamp decreasing time
            cur_bin = b;
            marker = Marker::none;
        } else if (id == vocab::NOTE_ON) {
            marker = Marker::on;
        } else if (id == vocab::NOTE_OFF) {
            marker = Marker::off;
        } else if (vocab::is_pitch(id)) {
            int p = vocab::pitch_of(id);
            double t = cur_bin * vocab::HOP_S;
            if (marker == Marker::on) {
                if (open.count(p)) close(p, t); // re-onset closes the earlier note
                open[p] = t;
            } else if (marker == Marker::off) {
                if (!close(p, t)) res.skipped++;
            } else {
                res.skipped++;
            }
        } else {
            res.skipped++; // stray BOS/END_TIE
        }
    }
    // pitches still open close at the segment end and are reported continuing
    std::vector<int> still;
    for (auto& [p, t] : open) still.push_back(p);
    for (int p : still) {
        res.continuing.insert(p);
        close(p, segment_dur_s);
    }
    res.notes.sort_notes();
    return res;
}

NoteList join_segments(const std::vector<DecodeResult>& segments,
                       const std::vector<double>& segment_starts,
                       double segment_dur_s) {
    if (segments.size() != segment_starts.size())
        throw std::invalid_argument("join_segments: size mismatch");
    NoteList out;
    std::map<int, size_t> pending; // pitch -> index in out.notes, still open

    for (size_t k = 0; k < segments.size(); ++k) {
        const DecodeResult& seg = segments[k];
        double start = segment_starts[k];
        std::map<int, size_t> next_pending;

        // anything pending without a matching tie in this segment closes at
        // the previous boundary (its offset already sits there)
        std::vector<const NoteEvent*> ordered;
        for (const NoteEvent& n : seg.notes.notes) ordered.push_back(&n);

        std::set<int> tie_used;
        for (const NoteEvent* np : ordered) {
            NoteEvent n = *np;
            bool from_tie = seg.held_over.count(n.pitch) && n.onset_s == 0.0 &&
                            !tie_used.count(n.pitch);
            bool cont = seg.continuing.count(n.pitch) &&
                        n.offset_s >= segment_dur_s - 1e-9;
            n.onset_s += start;
            n.offset_s += start;
            if (from_tie) {
                tie_used.insert(n.pitch);
                auto it = pending.find(n.pitch);
                if (it != pending.end()) {
                    out.notes[it->second].offset_s = n.offset_s;
                    if (cont) next_pending[n.pitch] = it->second;
                    continue;
                }
            }
            out.notes.push_back(n);
            if (cont) next_pending[n.pitch] = out.notes.size() - 1;
        }
        pending = std::move(next_pending);
        out.duration_s = std::max(out.duration_s, start + segment_dur_s);
    }
    out.sort_notes();
    return out;
}

void write_vocab_json(const std::filesystem::path& path) {
    nlohmann::json j;
    j[std::to_string(vocab::BOS)] = "BOS";
    j[std::to_string(vocab::EOS)] = "EOS";
    j[std::to_string(vocab::END_TIE)] = "END_TIE";
    j[std::to_string(vocab::NOTE_ON)] = "NOTE_ON";
    j[std::to_string(vocab::NOTE_OFF)] = "NOTE_OFF";
    for (int p = 0; p < 128; ++p)
        j[std::to_string(vocab::pitch_token(p))] = "PITCH_" + std::to_string(p);
    for (int b = 0; b < vocab::TIME_BINS; ++b)
        j[std::to_string(vocab::time_token(b))] = "TIME_" + std::to_string(b);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

} // namespace synthamt
