#pragma once

#include "synthamt/metrics.hpp"
#include "synthamt/renderer.hpp"
#include "synthamt/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace synthamt {

// *.mid files in lexical order, flattened to (program, NoteList) tracks
std::vector<std::pair<int, NoteList>> load_midi_pool(const std::filesystem::path& dir);

// Note-list JSON used by dataset sidecars and evaluation references.
std::string notes_to_json(const NoteList& notes, const std::set<int>& held_over = {},
                          const std::set<int>& continuing = {});
struct NotesJson {
    NoteList notes;
    std::set<int> held_over, continuing;
};
NotesJson notes_from_json(const std::string& text);

// N (wav, sidecar json) pairs plus index.json; example i uses the rng stream
// mix_seed(master_seed, i), so output is byte-stable per seed.
void render_dataset(const std::vector<std::pair<int, NoteList>>& midi_pool,
                    const SampleBank& bank, const RenderConfig& cfg, size_t count,
                    uint64_t master_seed, const std::filesystem::path& out_dir,
                    int threads = 1);

struct RenderedExample {
    AudioBuffer audio;
    NoteList notes;
    std::set<int> held_over, continuing;
};

std::vector<RenderedExample> load_dataset(const std::filesystem::path& dir);

// mel + token encoding; examples whose token sequence would overflow are
// dropped (counted in *dropped when given)
std::vector<nn::TrainExample> to_train_examples(const std::vector<RenderedExample>& data,
                                                int max_len = 512, size_t* dropped = nullptr);

// Consecutive non-overlapping 2.56-s windows (zero-padded tail), greedy
// decode per window, end-tie join across boundaries.
NoteList transcribe_buffer(const AudioBuffer& audio, const nn::Params& params);

struct FileReport {
    std::string name;
    EvalReport report;
};

// filename-stem-aligned (est, ref) pairs of .mid files; unpaired files are
// listed and excluded
struct DirEvalResult {
    std::vector<FileReport> files;
    std::vector<std::string> unpaired;
    EvalReport mean;
};

DirEvalResult evaluate_dirs(const std::filesystem::path& est_dir,
                            const std::filesystem::path& ref_dir,
                            const MatchConfig& cfg = MatchConfig{}, int threads = 1);

std::string eval_table(const DirEvalResult& res);
std::string eval_json(const DirEvalResult& res);

} // namespace synthamt
