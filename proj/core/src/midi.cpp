#include "synthamt/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace synthamt {

void NoteList::sort_notes() {
    std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
        return a.pitch < b.pitch;
    });
}

InstrumentGroup program_to_group(int program) {
    if (program < 1 || program > 128)
        throw std::out_of_range("program_to_group: program " + std::to_string(program) +
                                " outside 1..128");
    if (program <= 8) return InstrumentGroup::keyboard;
    if (program <= 16) return InstrumentGroup::mallet;
    if (program <= 24) return InstrumentGroup::organ;
    if (program <= 32) return InstrumentGroup::guitar;
    if (program <= 40) return InstrumentGroup::bass;
    if (program <= 56) return InstrumentGroup::strings;
    if (program <= 64) return InstrumentGroup::brass;
    if (program <= 72) return InstrumentGroup::reed;
    if (program <= 80) return InstrumentGroup::flute;
    if (program <= 96) return InstrumentGroup::synth_vocal;
    if (program >= 105 && program <= 112) return InstrumentGroup::guitar;
    return InstrumentGroup::unsupported;
}

const char* group_name(InstrumentGroup g) {
    switch (g) {
        case InstrumentGroup::keyboard: return "keyboard";
        case InstrumentGroup::mallet: return "mallet";
        case InstrumentGroup::organ: return "organ";
        case InstrumentGroup::guitar: return "guitar";
        case InstrumentGroup::bass: return "bass";
        case InstrumentGroup::strings: return "strings";
        case InstrumentGroup::brass: return "brass";
        case InstrumentGroup::reed: return "reed";
        case InstrumentGroup::flute: return "flute";
        case InstrumentGroup::synth_vocal: return "synth_vocal";
        case InstrumentGroup::unsupported: return "unsupported";
    }
    return "unsupported";
}

InstrumentGroup group_from_name(const std::string& name) {
    for (int g = 0; g <= int(InstrumentGroup::unsupported); ++g)
        if (name == group_name(InstrumentGroup(g))) return InstrumentGroup(g);
    throw std::invalid_argument("unknown instrument group: " + name);
}

namespace {

struct Reader {
    std::span<const uint8_t> buf;
    size_t pos = 0;

    void require(size_t n) const {
        if (pos + n > buf.size()) throw SmfParseError("unexpected end of file", pos);
    }
    uint8_t u8() { require(1); return buf[pos++]; }
    uint8_t peek() const { require(1); return buf[pos]; }
    uint16_t u16() { require(2); uint16_t v = uint16_t(buf[pos]) << 8 | buf[pos + 1]; pos += 2; return v; }
    uint32_t u32() {
        require(4);
        uint32_t v = uint32_t(buf[pos]) << 24 | uint32_t(buf[pos + 1]) << 16 |
                     uint32_t(buf[pos + 2]) << 8 | buf[pos + 3];
        pos += 4;
        return v;
    }
    uint32_t varlen() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            uint8_t b = u8();
            v = (v << 7) | (b & 0x7f);
            if (!(b & 0x80)) return v;
        }
        throw SmfParseError("variable-length quantity too long", pos);
    }
    void skip(size_t n) { require(n); pos += n; }
};

struct RawNote {
    int64_t on_tick, off_tick;
    int pitch, velocity, program;
};

struct TempoChange {
    int64_t tick;
    uint32_t usec_per_qn;
};

double ticks_to_seconds(int64_t tick, const std::vector<TempoChange>& tempo, int division) {
    double sec = 0.0;
    int64_t prev_tick = 0;
    uint32_t usec = 500000; // default 120 BPM
    for (const auto& tc : tempo) {
        if (tc.tick >= tick) break;
        sec += double(tc.tick - prev_tick) * usec * 1e-6 / division;
        prev_tick = tc.tick;
        usec = tc.usec_per_qn;
    }
    sec += double(tick - prev_tick) * usec * 1e-6 / division;
    return sec;
}

} // namespace

std::vector<std::pair<int, NoteList>> parse_smf(std::span<const uint8_t> bytes) {
    Reader r{bytes};
    r.require(14);
    if (std::memcmp(bytes.data(), "MThd", 4) != 0)
        throw SmfParseError("missing MThd header", 0);
    r.pos = 4;
    uint32_t hdr_len = r.u32();
    if (hdr_len < 6) throw SmfParseError("MThd too short", r.pos);
    uint16_t format = r.u16();
    uint16_t ntrks = r.u16();
    uint16_t division = r.u16();
    r.skip(hdr_len - 6);
    if (format == 2) throw SmfParseError("SMF type 2 is unsupported", 8);
    if (format > 2) throw SmfParseError("unknown SMF format " + std::to_string(format), 8);
    if (division & 0x8000) throw SmfParseError("SMPTE time division is unsupported", 12);
    if (division == 0) throw SmfParseError("zero time division", 12);

    std::vector<TempoChange> tempo;
    // key: (track, channel, program) in encounter order
    std::map<std::tuple<int, int, int>, std::vector<RawNote>> groups;

    for (int trk = 0; trk < ntrks; ++trk) {
        size_t chunk_start = r.pos;
        r.require(8);
        if (std::memcmp(bytes.data() + r.pos, "MTrk", 4) != 0)
            throw SmfParseError("missing MTrk chunk", chunk_start);
        r.pos += 4;
        uint32_t len = r.u32();
        size_t end = r.pos + len;
        if (end > bytes.size()) throw SmfParseError("MTrk length past end of file", chunk_start);

        int64_t tick = 0;
        uint8_t running = 0;
        int program[16];
        for (int c = 0; c < 16; ++c) program[c] = 1;
        // (channel, pitch) -> open note
        std::map<std::pair<int, int>, RawNote> open;

        auto close_note = [&](int ch, int pitch, int64_t off_tick) {
            auto it = open.find({ch, pitch});
            if (it == open.end()) return;
            RawNote n = it->second;
            open.erase(it);
            n.off_tick = off_tick > n.on_tick ? off_tick : n.on_tick + 1;
            if (ch != 9) groups[{trk, ch, n.program}].push_back(n);
        };

        while (r.pos < end) {
            tick += r.varlen();
            uint8_t status = r.peek();
            if (status & 0x80) { r.pos++; } else {
                if (!(running & 0x80)) throw SmfParseError("data byte without running status", r.pos);
                status = running;
            }
            if (status < 0xf0) running = status;

            uint8_t type = status & 0xf0;
            int ch = status & 0x0f;
            switch (type) {
                case 0x80: { // note off
                    int pitch = r.u8() & 0x7f;
                    r.u8();
                    close_note(ch, pitch, tick);
                    break;
                }
                case 0x90: { // note on (velocity 0 == off)
                    int pitch = r.u8() & 0x7f;
                    int vel = r.u8() & 0x7f;
                    if (vel == 0) {
                        close_note(ch, pitch, tick);
                    } else {
                        // overlapping same-pitch note: close the earlier one here
                        close_note(ch, pitch, tick);
                        open[{ch, pitch}] = RawNote{tick, -1, pitch,
                                                    std::clamp(vel, 1, 127), program[ch]};
                    }
                    break;
                }
                case 0xa0: case 0xb0: case 0xe0:
                    r.skip(2);
                    break;
                case 0xc0:
                    program[ch] = (r.u8() & 0x7f) + 1;
                    break;
                case 0xd0:
                    r.skip(1);
                    break;
                case 0xf0: {
                    if (status == 0xf0 || status == 0xf7) {
                        uint32_t n = r.varlen();
                        r.skip(n);
                    } else if (status == 0xff) {
                        uint8_t meta = r.u8();
                        uint32_t n = r.varlen();
                        if (meta == 0x51 && n == 3) {
                            uint32_t usec = uint32_t(r.u8()) << 16;
                            usec |= uint32_t(r.u8()) << 8;
                            usec |= r.u8();
                            tempo.push_back({tick, usec});
                        } else {
                            r.skip(n);
                        }
                    } else {
                        throw SmfParseError("unexpected system message", r.pos - 1);
                    }
                    break;
                }
                default:
                    throw SmfParseError("bad status byte", r.pos - 1);
            }
        }
        if (r.pos != end) throw SmfParseError("event ran past MTrk boundary", r.pos);
        // notes left open close at the track's last tick
        std::vector<std::pair<int, int>> keys;
        for (auto& [k, v] : open) keys.push_back(k);
        for (auto& k : keys) close_note(k.first, k.second, tick);
    }

    std::sort(tempo.begin(), tempo.end(),
              [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });

    std::vector<std::pair<int, NoteList>> out;
    for (auto& [key, raw] : groups) {
        NoteList nl;
        for (const RawNote& n : raw) {
            NoteEvent e;
            e.pitch = n.pitch;
            e.velocity = std::clamp(n.velocity, 1, 127);
            e.program = n.program;
            e.onset_s = ticks_to_seconds(n.on_tick, tempo, division);
            e.offset_s = ticks_to_seconds(n.off_tick, tempo, division);
            nl.notes.push_back(e);
            nl.duration_s = std::max(nl.duration_s, e.offset_s);
        }
        nl.sort_notes();
        if (!nl.notes.empty()) out.emplace_back(std::get<2>(key), std::move(nl));
    }
    return out;
}

std::vector<std::pair<int, NoteList>> parse_smf_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("smf: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return parse_smf(bytes);
}

namespace {

void wr_varlen(std::vector<uint8_t>& v, uint32_t x) {
    uint8_t stack[4];
    int n = 0;
    do {
        stack[n++] = uint8_t(x & 0x7f);
        x >>= 7;
    } while (x && n < 4);
    for (int i = n - 1; i >= 1; --i) v.push_back(stack[i] | 0x80);
    v.push_back(stack[0]);
}

} // namespace

std::vector<uint8_t> write_smf(const NoteList& notes, int program,
                               int ticks_per_quarter, double bpm) {
    struct Ev {
        int64_t tick;
        int order; // off before on at the same tick
        uint8_t status, d1, d2;
    };
    uint32_t usec_per_qn = uint32_t(std::llround(60e6 / bpm));
    double ticks_per_sec = double(ticks_per_quarter) * 1e6 / usec_per_qn;

    std::vector<Ev> evs;
    for (const NoteEvent& n : notes.notes) {
        int64_t on = std::llround(n.onset_s * ticks_per_sec);
        int64_t off = std::llround(n.offset_s * ticks_per_sec);
        if (off <= on) off = on + 1;
        evs.push_back({on, 1, 0x90, uint8_t(n.pitch), uint8_t(std::clamp(n.velocity, 1, 127))});
        evs.push_back({off, 0, 0x80, uint8_t(n.pitch), 64});
    }
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        return a.order < b.order;
    });

    std::vector<uint8_t> trk;
    // tempo
    wr_varlen(trk, 0);
    trk.insert(trk.end(), {0xff, 0x51, 0x03, uint8_t(usec_per_qn >> 16),
                           uint8_t(usec_per_qn >> 8), uint8_t(usec_per_qn)});
    // program change
    wr_varlen(trk, 0);
    trk.push_back(0xc0);
    trk.push_back(uint8_t(std::clamp(program, 1, 128) - 1));

    int64_t prev = 0;
    for (const Ev& e : evs) {
        wr_varlen(trk, uint32_t(e.tick - prev));
        prev = e.tick;
        trk.push_back(e.status);
        trk.push_back(e.d1);
        trk.push_back(e.d2);
    }
    wr_varlen(trk, 0);
    trk.insert(trk.end(), {0xff, 0x2f, 0x00});

    std::vector<uint8_t> out;
    auto wr_u32be = [&](uint32_t x) {
        out.push_back(uint8_t(x >> 24)); out.push_back(uint8_t(x >> 16));
        out.push_back(uint8_t(x >> 8)); out.push_back(uint8_t(x));
    };
    auto wr_u16be = [&](uint16_t x) {
        out.push_back(uint8_t(x >> 8)); out.push_back(uint8_t(x));
    };
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    wr_u32be(6);
    wr_u16be(0);
    wr_u16be(1);
    wr_u16be(uint16_t(ticks_per_quarter));
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    wr_u32be(uint32_t(trk.size()));
    out.insert(out.end(), trk.begin(), trk.end());
    return out;
}

SlicedSegment slice_notes(const NoteList& src, double start_s, double dur_s) {
    if (dur_s <= 0.0) throw std::invalid_argument("slice_notes: dur_s must be positive");
    SlicedSegment seg;
    double end_s = start_s + dur_s;
    for (const NoteEvent& n : src.notes) {
        if (n.onset_s >= end_s || n.offset_s <= start_s) continue;
        NoteEvent local = n;
        bool held = n.onset_s < start_s;
        bool cont = n.offset_s > end_s;
        local.onset_s = held ? 0.0 : n.onset_s - start_s;
        local.offset_s = cont ? dur_s : n.offset_s - start_s;
        seg.notes.notes.push_back(local);
        if (held) seg.held_over.insert(n.pitch);
        if (cont) seg.continuing.insert(n.pitch);
    }
    seg.notes.duration_s = dur_s;
    seg.notes.sort_notes();
    return seg;
}

} // namespace synthamt
