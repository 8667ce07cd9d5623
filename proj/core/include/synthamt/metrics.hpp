#pragma once

#include "synthamt/midi.hpp"

#include <utility>
#include <vector>

namespace synthamt {

struct MatchConfig {
    double onset_tol_s = 0.050;
    double offset_tol_s = 0.050;
    double offset_ratio = 0.20; // offset within max(50 ms, 20% of ref length)
    double frame_hop_s = 0.010;
};

// Maximum-cardinality one-to-one matching over pairs with equal pitch,
// |onset error| <= tol, and (with_offset) |offset error| <= max(tol, ratio *
// ref length). Ties broken toward smaller total onset error.
std::vector<std::pair<size_t, size_t>> match_notes(const NoteList& ref, const NoteList& est,
                                                   const MatchConfig& cfg, bool with_offset);

struct PRF {
    double precision = 0.0, recall = 0.0, f = 0.0;
};

PRF f_measure(size_t matched, size_t ref_count, size_t est_count);

// mir-eval multipitch accuracy: TP / (TP + FP + FN) over 10 ms x 128-pitch
// rolls; a pitch is active in a frame when the frame center lies in
// [onset, offset).
double frame_accuracy(const NoteList& ref, const NoteList& est, double hop_s,
                      double duration_s);

struct EvalReport {
    double F = 0.0, Fn = 0.0, Ac = 0.0;
    PRF with_offset, no_offset;
    size_t matched_with_offset = 0, matched_no_offset = 0;
    size_t ref_count = 0, est_count = 0;
};

EvalReport evaluate(const NoteList& ref, const NoteList& est,
                    const MatchConfig& cfg = MatchConfig{});

} // namespace synthamt
