#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace synthamt {

struct NoteEvent {
    int pitch = 60;       // 0..127
    double onset_s = 0.0;
    double offset_s = 0.0; // > onset_s
    int velocity = 64;    // 1..127
    int program = 1;      // 1..128, 1-based MIDI program

    bool operator==(const NoteEvent&) const = default;
};

struct NoteList {
    std::vector<NoteEvent> notes; // sorted by (onset_s, pitch)
    double duration_s = 0.0;

    void sort_notes();
    bool empty() const { return notes.empty(); }
};

enum class InstrumentGroup {
    keyboard, mallet, organ, guitar, bass,
    strings, brass, reed, flute, synth_vocal,
    unsupported
};

// Total on 1..128; throws std::out_of_range otherwise.
// keyboard 1-8, mallet 9-16, organ 17-24, guitar 25-32 & 105-112, bass
// 33-40, strings 41-56, brass 57-64, reed 65-72, flute 73-80,
// synth_vocal 81-96; everything else unsupported.
InstrumentGroup program_to_group(int program);

const char* group_name(InstrumentGroup g);
InstrumentGroup group_from_name(const std::string& name); // throws on unknown

struct SmfParseError : std::runtime_error {
    size_t byte_offset;
    SmfParseError(const std::string& what, size_t offset)
        : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// SMF type 0/1 -> one NoteList per (track, channel, program), channel 10
// dropped, tempo map applied, note-on velocity 0 treated as note-off.
std::vector<std::pair<int, NoteList>> parse_smf(std::span<const uint8_t> bytes);

std::vector<std::pair<int, NoteList>> parse_smf_file(const std::string& path);

// Type-0 writer used for fixtures and transcription output.
std::vector<uint8_t> write_smf(const NoteList& notes, int program = 1,
                               int ticks_per_quarter = 480, double bpm = 120.0);

struct SlicedSegment {
    NoteList notes;              // times rebased to [0, dur_s)
    std::set<int> held_over;     // pitches whose onset preceded the window
    std::set<int> continuing;    // pitches truncated at the window end
};

// Notes intersecting [start_s, start_s + dur_s).
SlicedSegment slice_notes(const NoteList& src, double start_s, double dur_s);

} // namespace synthamt
