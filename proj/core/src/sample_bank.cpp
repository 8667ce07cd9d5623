#include "synthamt/sample_bank.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace synthamt {

OneShot mix(const OneShot& main, const OneShot& sub, double alpha) {
    if (main.pitch != sub.pitch)
        throw std::invalid_argument("mix: pitch mismatch");
    if (main.sample_rate != sub.sample_rate)
        throw std::invalid_argument("mix: sample-rate mismatch");
    if (alpha < 0.0 || alpha > 2.0)
        throw std::invalid_argument("mix: alpha outside [0, 2]");

    OneShot out = main;
    out.samples.resize(std::max(main.samples.size(), sub.samples.size()), 0.0f);
    for (size_t i = 0; i < sub.samples.size(); ++i)
        out.samples[i] = (i < main.samples.size() ? main.samples[i] : 0.0f) +
                         float(alpha) * sub.samples[i];

    float p = 0.0f;
    for (float s : out.samples) p = std::max(p, std::fabs(s));
    if (p > 0.0f)
        for (float& s : out.samples) s /= p;
    return out;
}

MixedTimbre::MixedTimbre(const SampleBank& bank, std::string main_id, std::string sub_id,
                         double alpha)
    : bank_(&bank), main_id_(std::move(main_id)), sub_id_(std::move(sub_id)), alpha_(alpha) {
    group_ = bank.group_of(main_id_);
    auto mp = bank.pitches_of(main_id_);
    auto sp = bank.pitches_of(sub_id_);
    std::set_intersection(mp.begin(), mp.end(), sp.begin(), sp.end(),
                          std::back_inserter(pitches_));
    if (pitches_.empty())
        throw std::runtime_error("MixedTimbre: timbres '" + main_id_ + "' and '" + sub_id_ +
                                 "' share no pitch");
}

const OneShot& MixedTimbre::lookup(int pitch) const {
    if (pitch < 0 || pitch > 127)
        throw std::invalid_argument("lookup: pitch outside 0..127");
    auto it = cache_.find(pitch);
    if (it != cache_.end()) return it->second;

    // nearest available pitch, ties to lower
    int best = pitches_.front();
    for (int p : pitches_) {
        int d = std::abs(p - pitch), bd = std::abs(best - pitch);
        if (d < bd || (d == bd && p < best)) best = p;
    }

    OneShot mixed = mix(*bank_->find(main_id_, best), *bank_->find(sub_id_, best), alpha_);
    if (best != pitch) {
        double ratio = std::pow(2.0, double(pitch - best) / 12.0);
        mixed.samples = resample_by_ratio(mixed.samples, ratio);
        mixed.pitch = pitch;
        // resampling can overshoot slightly
        float p = 0.0f;
        for (float s : mixed.samples) p = std::max(p, std::fabs(s));
        if (p > 1.0f)
            for (float& s : mixed.samples) s /= p;
    }
    return cache_.emplace(pitch, std::move(mixed)).first->second;
}

SampleBank SampleBank::load(const std::filesystem::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("sample bank: cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    f >> j;

    SampleBank bank;
    auto base = manifest_path.parent_path();
    for (auto& [timbre_id, entry] : j.items()) {
        InstrumentGroup group = group_from_name(entry.at("group").get<std::string>());
        for (auto& [pitch_str, path] : entry.at("pitches").items()) {
            OneShot shot;
            shot.pitch = std::stoi(pitch_str);
            shot.timbre_id = timbre_id;
            shot.group = group;
            AudioBuffer buf = wav_read(base / path.get<std::string>());
            buf = resample_to_rate(buf, 16000);
            float p = peak(buf);
            if (p > 1.0f)
                for (float& s : buf.samples) s /= p;
            shot.samples = std::move(buf.samples);
            bank.add(std::move(shot));
        }
    }
    return bank;
}

void SampleBank::add(OneShot shot) {
    if (shot.sample_rate != 16000)
        throw std::invalid_argument("sample bank: one-shots must be 16 kHz");
    groups_[shot.timbre_id] = shot.group;
    timbres_[shot.timbre_id][shot.pitch] = std::move(shot);
}

const OneShot* SampleBank::find(const std::string& timbre_id, int pitch) const {
    auto t = timbres_.find(timbre_id);
    if (t == timbres_.end()) return nullptr;
    auto p = t->second.find(pitch);
    return p == t->second.end() ? nullptr : &p->second;
}

std::vector<int> SampleBank::pitches_of(const std::string& timbre_id) const {
    std::vector<int> out;
    auto t = timbres_.find(timbre_id);
    if (t == timbres_.end()) return out;
    for (auto& [p, s] : t->second) out.push_back(p);
    return out;
}

std::vector<std::string> SampleBank::timbre_ids() const {
    std::vector<std::string> out;
    for (auto& [id, m] : timbres_) out.push_back(id);
    return out;
}

InstrumentGroup SampleBank::group_of(const std::string& timbre_id) const {
    auto it = groups_.find(timbre_id);
    if (it == groups_.end())
        throw std::runtime_error("sample bank: unknown timbre '" + timbre_id + "'");
    return it->second;
}

MixedTimbre SampleBank::draw_mixed_timbre(Rng& rng) const {
    auto ids = timbre_ids();
    if (ids.size() < 2)
        throw std::runtime_error("sample bank: need at least 2 timbres to mix");

    for (int attempt = 0; attempt < 64; ++attempt) {
        size_t mi = size_t(rng.uniform_int(0, int64_t(ids.size()) - 1));
        size_t si = size_t(rng.uniform_int(0, int64_t(ids.size()) - 2));
        if (si >= mi) si++;
        auto mp = pitches_of(ids[mi]);
        auto sp = pitches_of(ids[si]);
        std::vector<int> shared;
        std::set_intersection(mp.begin(), mp.end(), sp.begin(), sp.end(),
                              std::back_inserter(shared));
        if (shared.empty()) continue;
        double alpha = rng.uniform(0.0, 2.0);
        return MixedTimbre(*this, ids[mi], ids[si], alpha);
    }
    throw std::runtime_error("sample bank: no timbre pair shares a pitch");
}

} // namespace synthamt
