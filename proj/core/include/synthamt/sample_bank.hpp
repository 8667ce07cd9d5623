#pragma once

#include "synthamt/audio.hpp"
#include "synthamt/midi.hpp"
#include "synthamt/rng.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace synthamt {

struct OneShot {
    std::vector<float> samples; // mono, 16 kHz, |s| <= 1
    int sample_rate = 16000;
    int pitch = 60;
    std::string timbre_id;
    InstrumentGroup group = InstrumentGroup::keyboard;
};

// main + alpha * sub over the longer length, then peak-normalized
OneShot mix(const OneShot& main, const OneShot& sub, double alpha);

class SampleBank;

// A sampled (main, sub, alpha) pair with per-pitch mixed one-shots cached on
// first use. lookup() falls back to the nearest shared pitch (ties to lower)
// resampled by the semitone ratio.
class MixedTimbre {
public:
    MixedTimbre(const SampleBank& bank, std::string main_id, std::string sub_id, double alpha);

    const OneShot& lookup(int pitch) const;

    const std::string& main_id() const { return main_id_; }
    const std::string& sub_id() const { return sub_id_; }
    double alpha() const { return alpha_; }
    InstrumentGroup group() const { return group_; }

private:
    const SampleBank* bank_;
    std::string main_id_, sub_id_;
    double alpha_;
    InstrumentGroup group_;
    std::vector<int> pitches_; // shared by both timbres, ascending
    mutable std::map<int, OneShot> cache_;
};

// One-shot samples indexed by (timbre, pitch); immutable after load.
// Manifest: {timbre_id: {"group": name, "pitches": {"60": "rel/path.wav"}}}.
class SampleBank {
public:
    static SampleBank load(const std::filesystem::path& manifest_path);

    void add(OneShot shot); // also used by test fixtures

    const OneShot* find(const std::string& timbre_id, int pitch) const;
    std::vector<int> pitches_of(const std::string& timbre_id) const;
    std::vector<std::string> timbre_ids() const;
    InstrumentGroup group_of(const std::string& timbre_id) const;
    size_t timbre_count() const { return timbres_.size(); }

    // Draw order: main index, sub index (resampled until a shared pitch
    // exists), alpha ~ U[0,2].
    MixedTimbre draw_mixed_timbre(Rng& rng) const;

private:
    std::map<std::string, std::map<int, OneShot>> timbres_;
    std::map<std::string, InstrumentGroup> groups_;
};

} // namespace synthamt
