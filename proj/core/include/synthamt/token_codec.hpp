#pragma once

#include "synthamt/midi.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>
#include <vector>

namespace synthamt {

// 389-id vocabulary: specials, 128 pitches, 256 absolute 10 ms time bins.
namespace vocab {
constexpr int BOS = 0;
constexpr int EOS = 1;
constexpr int END_TIE = 2;   // closes the held-over pitch list
constexpr int NOTE_ON = 3;
constexpr int NOTE_OFF = 4;
constexpr int PITCH_BASE = 5;              // + pitch (128 values)
constexpr int TIME_BASE = PITCH_BASE + 128; // + bin (256 values)
constexpr int TIME_BINS = 256;
constexpr int SIZE = TIME_BASE + TIME_BINS; // 389
constexpr double HOP_S = 0.010;
constexpr double SEGMENT_S = 2.56;

inline bool is_pitch(int id) { return id >= PITCH_BASE && id < TIME_BASE; }
inline bool is_time(int id) { return id >= TIME_BASE && id < SIZE; }
inline int pitch_of(int id) { return id - PITCH_BASE; }
inline int bin_of(int id) { return id - TIME_BASE; }
inline int pitch_token(int pitch) { return PITCH_BASE + pitch; }
inline int time_token(int bin) { return TIME_BASE + bin; }
} // namespace vocab

struct TokenSeq {
    std::vector<int> ids;
    bool operator==(const TokenSeq&) const = default;
};

struct TruncationError : std::runtime_error {
    std::vector<NoteEvent> dropped;
    explicit TruncationError(std::vector<NoteEvent> d);
};

// nearest 10 ms bin, ties to even, clamped to [0, 255]
int quantize_time_bin(double t_s);

// The quantization encode applies: onset/offset snapped to the grid with a
// minimum one-bin length; reference for round-trip tests.
NoteList quantize_notes(const NoteList& notes);

// Layout: BOS, held-over pitches ascending, END_TIE, then per time bin a
// time token followed by OFF events then ON events (pitches ascending).
// Continuing notes emit no OFF. Throws TruncationError past max_len.
TokenSeq encode(const NoteList& notes, const std::set<int>& held_over,
                const std::set<int>& continuing, int max_len = 512);

struct DecodeResult {
    NoteList notes;
    std::set<int> held_over;  // pitches opened by the tie section
    std::set<int> continuing; // pitches still open at EOS
    int skipped = 0;          // malformed tokens ignored
};

// Tolerates arbitrary id sequences; never throws on content.
DecodeResult decode(const TokenSeq& tokens, double segment_dur_s = vocab::SEGMENT_S);

// Merge per-segment decodes into one piece; continuing/held-over pitch pairs
// across consecutive segments fuse into single notes.
NoteList join_segments(const std::vector<DecodeResult>& segments,
                       const std::vector<double>& segment_starts,
                       double segment_dur_s = vocab::SEGMENT_S);

// id -> symbolic name map, for checkpoint portability
void write_vocab_json(const std::filesystem::path& path);

} // namespace synthamt
