#include "synthamt/pipeline.hpp"

#include "synthamt/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace synthamt {

using nlohmann::json;

std::vector<std::pair<int, NoteList>> load_midi_pool(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("midi pool: not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".mid" || e.path().extension() == ".midi")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::pair<int, NoteList>> pool;
    for (const auto& f : files) {
        auto tracks = parse_smf_file(f.string());
        pool.insert(pool.end(), tracks.begin(), tracks.end());
    }
    if (pool.empty())
        throw std::runtime_error("midi pool: no usable notes in " + dir.string());
    return pool;
}

std::string notes_to_json(const NoteList& notes, const std::set<int>& held_over,
                          const std::set<int>& continuing) {
    json j;
    j["duration_s"] = notes.duration_s;
    j["held_over"] = held_over;
    j["continuing"] = continuing;
    j["notes"] = json::array();
    for (const NoteEvent& n : notes.notes)
        j["notes"].push_back({{"pitch", n.pitch}, {"onset_s", n.onset_s},
                              {"offset_s", n.offset_s}, {"velocity", n.velocity},
                              {"program", n.program}});
    return j.dump(2);
}

NotesJson notes_from_json(const std::string& text) {
    json j = json::parse(text);
    NotesJson out;
    out.notes.duration_s = j.at("duration_s");
    for (const auto& n : j.at("notes")) {
        NoteEvent e;
        e.pitch = n.at("pitch");
        e.onset_s = n.at("onset_s");
        e.offset_s = n.at("offset_s");
        e.velocity = n.at("velocity");
        e.program = n.at("program");
        out.notes.notes.push_back(e);
    }
    out.notes.sort_notes();
    for (int p : j.value("held_over", std::vector<int>{})) out.held_over.insert(p);
    for (int p : j.value("continuing", std::vector<int>{})) out.continuing.insert(p);
    return out;
}

namespace {

std::string example_stem(size_t i) {
    std::ostringstream ss;
    ss << std::setw(6) << std::setfill('0') << i;
    return ss.str();
}

} // namespace

void render_dataset(const std::vector<std::pair<int, NoteList>>& midi_pool,
                    const SampleBank& bank, const RenderConfig& cfg, size_t count,
                    uint64_t master_seed, const std::filesystem::path& out_dir,
                    int threads) {
    std::filesystem::create_directories(out_dir);
    std::vector<json> entries(count);
    std::exception_ptr failure;
    std::mutex mu;

    auto work = [&](size_t begin, size_t stride) {
        try {
            for (size_t i = begin; i < count; i += stride) {
                Rng rng = rng_for_example(master_seed, i);
                SegmentExample ex = synth_example(midi_pool, bank, cfg, rng);
                std::string stem = example_stem(i);
                wav_write(out_dir / (stem + ".wav"), ex.audio);
                json sidecar = json::parse(notes_to_json(ex.notes, ex.held_over, ex.continuing));
                sidecar["params"] = {{"main_timbre", ex.main_timbre},
                                     {"sub_timbre", ex.sub_timbre},
                                     {"alpha", ex.alpha},
                                     {"midi_index", ex.midi_index},
                                     {"window_start_s", ex.window_start_s},
                                     {"limited", ex.limited},
                                     {"limit_threshold", ex.limit_threshold}};
                std::ofstream f(out_dir / (stem + ".json"));
                f << sidecar.dump(2) << "\n";
                entries[i] = {{"wav", stem + ".wav"}, {"notes", stem + ".json"}};
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(mu);
            if (!failure) failure = std::current_exception();
        }
    };

    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(work, size_t(t), size_t(threads));
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    json index;
    index["count"] = count;
    index["seed"] = master_seed;
    index["examples"] = entries;
    std::ofstream f(out_dir / "index.json");
    f << index.dump(2) << "\n";
}

std::vector<RenderedExample> load_dataset(const std::filesystem::path& dir) {
    std::ifstream idx(dir / "index.json");
    if (!idx) throw std::runtime_error("dataset: missing index.json in " + dir.string());
    json index;
    idx >> index;
    std::vector<RenderedExample> out;
    for (const auto& e : index.at("examples")) {
        RenderedExample ex;
        ex.audio = wav_read(dir / e.at("wav").get<std::string>());
        std::ifstream nf(dir / e.at("notes").get<std::string>());
        std::string text((std::istreambuf_iterator<char>(nf)), std::istreambuf_iterator<char>());
        NotesJson nj = notes_from_json(text);
        ex.notes = std::move(nj.notes);
        ex.held_over = std::move(nj.held_over);
        ex.continuing = std::move(nj.continuing);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<nn::TrainExample> to_train_examples(const std::vector<RenderedExample>& data,
                                                int max_len, size_t* dropped) {
    std::vector<nn::TrainExample> out;
    size_t skip = 0;
    for (const RenderedExample& ex : data) {
        try {
            TokenSeq seq = encode(ex.notes, ex.held_over, ex.continuing, max_len);
            nn::TrainExample te;
            te.mel = melspec(ex.audio);
            te.tokens = seq.ids;
            out.push_back(std::move(te));
        } catch (const TruncationError&) {
            skip++;
        }
    }
    if (dropped) *dropped = skip;
    return out;
}

NoteList transcribe_buffer(const AudioBuffer& audio, const nn::Params& params) {
    if (audio.sample_rate != 16000)
        throw std::invalid_argument("transcribe: expected 16 kHz audio");
    const size_t seg = features_detail::kSegmentSamples;
    size_t n_segments = std::max<size_t>(1, (audio.samples.size() + seg - 1) / seg);

    std::vector<DecodeResult> decodes;
    std::vector<double> starts;
    for (size_t k = 0; k < n_segments; ++k) {
        AudioBuffer window;
        window.sample_rate = 16000;
        window.samples.assign(seg, 0.0f);
        size_t from = k * seg;
        size_t n = std::min(seg, audio.samples.size() > from ? audio.samples.size() - from : 0);
        std::copy_n(audio.samples.begin() + long(from), n, window.samples.begin());
        TokenSeq seq = nn::greedy_transcribe(melspec(window), params);
        decodes.push_back(decode(seq));
        starts.push_back(double(k) * vocab::SEGMENT_S);
    }
    return join_segments(decodes, starts);
}

namespace {

NoteList read_ref_or_est(const std::filesystem::path& p) {
    if (p.extension() == ".json") {
        std::ifstream f(p);
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        return notes_from_json(text).notes;
    }
    NoteList merged;
    for (auto& [prog, nl] : parse_smf_file(p.string())) {
        merged.notes.insert(merged.notes.end(), nl.notes.begin(), nl.notes.end());
        merged.duration_s = std::max(merged.duration_s, nl.duration_s);
    }
    merged.sort_notes();
    return merged;
}

std::map<std::string, std::filesystem::path> index_by_stem(const std::filesystem::path& dir) {
    std::map<std::string, std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto ext = e.path().extension();
        if (ext == ".mid" || ext == ".midi" || ext == ".json")
            out[e.path().stem().string()] = e.path();
    }
    return out;
}

} // namespace

DirEvalResult evaluate_dirs(const std::filesystem::path& est_dir,
                            const std::filesystem::path& ref_dir,
                            const MatchConfig& cfg, int threads) {
    auto est = index_by_stem(est_dir);
    auto ref = index_by_stem(ref_dir);

    DirEvalResult res;
    std::vector<std::pair<std::string, std::pair<std::filesystem::path, std::filesystem::path>>> pairs;
    for (auto& [stem, path] : est) {
        auto it = ref.find(stem);
        if (it == ref.end()) res.unpaired.push_back(stem + " (estimate only)");
        else pairs.emplace_back(stem, std::make_pair(path, it->second));
    }
    for (auto& [stem, path] : ref)
        if (!est.count(stem)) res.unpaired.push_back(stem + " (reference only)");
    if (pairs.empty())
        throw std::runtime_error("evaluate: no filename-aligned pairs between " +
                                 est_dir.string() + " and " + ref_dir.string());

    res.files.resize(pairs.size());
    auto work = [&](size_t begin, size_t stride) {
        for (size_t i = begin; i < pairs.size(); i += stride) {
            NoteList e = read_ref_or_est(pairs[i].second.first);
            NoteList r = read_ref_or_est(pairs[i].second.second);
            res.files[i] = {pairs[i].first, evaluate(r, e, cfg)};
        }
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, size_t(t), size_t(threads));
        for (auto& t : pool) t.join();
    }

    for (const FileReport& fr : res.files) {
        res.mean.F += fr.report.F;
        res.mean.Fn += fr.report.Fn;
        res.mean.Ac += fr.report.Ac;
    }
    res.mean.F /= double(res.files.size());
    res.mean.Fn /= double(res.files.size());
    res.mean.Ac /= double(res.files.size());
    return res;
}

std::string eval_table(const DirEvalResult& res) {
    std::ostringstream ss;
    ss << std::left << std::setw(24) << "file" << std::right << std::setw(8) << "F"
       << std::setw(8) << "Fn" << std::setw(8) << "Ac" << "\n";
    ss << std::fixed << std::setprecision(3);
    for (const FileReport& fr : res.files)
        ss << std::left << std::setw(24) << fr.name << std::right << std::setw(8) << fr.report.F
           << std::setw(8) << fr.report.Fn << std::setw(8) << fr.report.Ac << "\n";
    ss << std::left << std::setw(24) << "mean" << std::right << std::setw(8) << res.mean.F
       << std::setw(8) << res.mean.Fn << std::setw(8) << res.mean.Ac << "\n";
    for (const std::string& u : res.unpaired) ss << "unpaired: " << u << "\n";
    return ss.str();
}

std::string eval_json(const DirEvalResult& res) {
    json j;
    j["files"] = json::array();
    for (const FileReport& fr : res.files)
        j["files"].push_back({{"name", fr.name}, {"F", fr.report.F}, {"Fn", fr.report.Fn},
                              {"Ac", fr.report.Ac},
                              {"precision", fr.report.no_offset.precision},
                              {"recall", fr.report.no_offset.recall}});
    j["mean"] = {{"F", res.mean.F}, {"Fn", res.mean.Fn}, {"Ac", res.mean.Ac}};
    j["unpaired"] = res.unpaired;
    return j.dump(2);
}

} // namespace synthamt
