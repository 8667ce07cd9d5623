// synthamt: render synthetic training audio from MIDI + one-shot samples,
// pre-train and adversarially fine-tune the transcription model, transcribe
// audio to MIDI, and evaluate note-level metrics.

#include "synthamt/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace synthamt;
using nlohmann::json;

namespace {

enum class LogLevel { debug = 0, info, warn, error, quiet };

LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("SYNTHAMT_LOG");
        std::string s = e ? e : "info";
        if (s == "debug") return LogLevel::debug;
        if (s == "warn") return LogLevel::warn;
        if (s == "error") return LogLevel::error;
        if (s == "quiet") return LogLevel::quiet;
        return LogLevel::info;
    }();
    return lvl;
}

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (lvl >= log_level() && lvl != LogLevel::quiet)
        std::cerr << "[" << names[int(lvl)] << "] " << msg << "\n";
}

json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    json j;
    f >> j;
    return j;
}

// key -> expected type name; validation happens before any side effect
void validate_config(const json& j, const std::vector<std::pair<std::string, std::string>>& schema) {
    for (const auto& [key, type] : schema) {
        if (!j.contains(key))
            throw std::runtime_error("config: missing required key '" + key + "'");
        const json& v = j.at(key);
        bool ok = (type == "string" && v.is_string()) ||
                  (type == "number" && v.is_number()) ||
                  (type == "integer" && v.is_number_integer()) ||
                  (type == "object" && v.is_object());
        if (!ok) throw std::runtime_error("config: key '" + key + "' must be a " + type);
    }
}

nn::ModelConfig model_config_from(const json& j) {
    nn::ModelConfig c;
    if (!j.contains("model")) return c;
    const json& m = j.at("model");
    c.embed = m.value("embed", c.embed);
    c.ff = m.value("ff", c.ff);
    c.heads = m.value("heads", c.heads);
    c.enc_layers = m.value("enc_layers", c.enc_layers);
    c.dec_layers = m.value("dec_layers", c.dec_layers);
    c.max_len = m.value("max_len", c.max_len);
    c.disc_hidden = m.value("disc_hidden", c.disc_hidden);
    c.disc_window = m.value("disc_window", c.disc_window);
    c.dropout = m.value("dropout", c.dropout);
    return c;
}

struct Common {
    std::string config_path;
    uint64_t seed = 1;
    bool seed_set = false;
    std::string mode = "confusion";
    int threads = 1;
    std::string out;
};

uint64_t effective_seed(const Common& c, const json& cfg) {
    if (c.seed_set) return c.seed;
    return cfg.value("seed", uint64_t(1));
}

void write_manifest(const std::filesystem::path& out_dir, const json& cfg, uint64_t seed,
                    const std::string& command) {
    json m;
    m["command"] = command;
    m["seed"] = seed;
    m["config"] = cfg;
    std::ofstream f(out_dir / "run_manifest.json");
    f << m.dump(2) << "\n";
}

int cmd_render(const Common& com) {
    json cfg = load_config(com.config_path);
    validate_config(cfg, {{"midi_dir", "string"}, {"bank_manifest", "string"},
                          {"count", "integer"}});
    uint64_t seed = effective_seed(com, cfg);
    std::string out = com.out.empty() ? cfg.value("out", "rendered") : com.out;

    auto pool = load_midi_pool(cfg.at("midi_dir").get<std::string>());
    auto bank = SampleBank::load(cfg.at("bank_manifest").get<std::string>());
    RenderConfig rc;
    log(LogLevel::info, "rendering " + std::to_string(cfg.at("count").get<size_t>()) +
                            " examples to " + out);
    std::filesystem::create_directories(out);
    write_manifest(out, cfg, seed, "render");
    render_dataset(pool, bank, rc, cfg.at("count").get<size_t>(), seed, out, com.threads);
    return 0;
}

std::vector<nn::TrainExample> load_train_examples(const std::string& dir, int max_len) {
    size_t dropped = 0;
    auto data = load_dataset(dir);
    auto out = to_train_examples(data, max_len, &dropped);
    if (dropped > 0)
        log(LogLevel::warn, std::to_string(dropped) + " examples dropped (token overflow)");
    if (out.empty()) throw std::runtime_error("dataset " + dir + " yielded no train examples");
    return out;
}

void append_metrics(std::ofstream& f, const nn::LossReport& rep) {
    json j{{"step", rep.step}, {"transcription_ce", rep.transcription_ce},
           {"disc_loss", rep.disc_loss}, {"adv_loss", rep.adv_loss},
           {"disc_accuracy", rep.disc_accuracy}, {"lambda", rep.lambda}};
    f << j.dump() << "\n";
}

int cmd_train(const Common& com) {
    json cfg = load_config(com.config_path);
    validate_config(cfg, {{"dataset_dir", "string"}, {"steps", "integer"}});
    uint64_t seed = effective_seed(com, cfg);
    std::string out = com.out.empty() ? cfg.value("out", "train_out") : com.out;
    std::filesystem::create_directories(out);
    write_manifest(out, cfg, seed, "train");

    nn::ModelConfig mc = model_config_from(cfg);
    auto examples = load_train_examples(cfg.at("dataset_dir").get<std::string>(), mc.max_len);

    Rng init_rng(mix_seed(seed, 0));
    nn::Params params = cfg.contains("init_checkpoint")
                            ? nn::load_checkpoint(cfg.at("init_checkpoint").get<std::string>())
                            : nn::init_params(mc, init_rng);

    nn::Adam opt({cfg.value("lr", 1e-4)});
    int64_t steps = cfg.at("steps").get<int64_t>();
    size_t batch_size = cfg.value("batch_size", size_t(8));
    int64_t ckpt_every = cfg.value("checkpoint_every", int64_t(0));

    Rng batch_rng(mix_seed(seed, 1));
    std::ofstream metrics(std::filesystem::path(out) / "metrics.jsonl");
    for (int64_t s = 0; s < steps; ++s) {
        uint64_t batch_seed = mix_seed(seed, uint64_t(s) + 2);
        std::vector<nn::TrainExample> batch;
        for (size_t b = 0; b < batch_size; ++b)
            batch.push_back(examples[size_t(batch_rng.uniform_int(0, int64_t(examples.size()) - 1))]);
        nn::LossReport rep = nn::pretrain_step(batch, params, opt, s, batch_seed);
        append_metrics(metrics, rep);
        if (s % 50 == 0)
            log(LogLevel::info, "step " + std::to_string(s) + " ce " +
                                    std::to_string(rep.transcription_ce));
        if (ckpt_every > 0 && (s + 1) % ckpt_every == 0)
            nn::save_checkpoint(std::filesystem::path(out) /
                                    ("ckpt_" + std::to_string(s + 1) + ".samt"),
                                params);
    }
    nn::save_checkpoint(std::filesystem::path(out) / "model.samt", params);
    write_vocab_json(std::filesystem::path(out) / "vocab.json");
    return 0;
}

std::vector<MelSegment> load_real_mels(const std::string& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .wav files in real-audio directory " + dir);
    std::vector<MelSegment> mels;
    const size_t seg = features_detail::kSegmentSamples;
    for (const auto& f : files) {
        AudioBuffer a = resample_to_rate(wav_read(f), 16000);
        for (size_t at = 0; at + seg <= a.samples.size(); at += seg) {
            AudioBuffer w;
            w.sample_rate = 16000;
            w.samples.assign(a.samples.begin() + long(at), a.samples.begin() + long(at + seg));
            mels.push_back(melspec(w));
        }
    }
    if (mels.empty()) throw std::runtime_error("real-audio files shorter than one 2.56-s segment");
    return mels;
}

int cmd_finetune(const Common& com) {
    json cfg = load_config(com.config_path);
    validate_config(cfg, {{"dataset_dir", "string"}, {"real_dir", "string"},
                          {"checkpoint", "string"}, {"steps", "integer"}});
    uint64_t seed = effective_seed(com, cfg);
    std::string out = com.out.empty() ? cfg.value("out", "finetune_out") : com.out;
    std::string mode_s = cfg.value("mode", com.mode);
    nn::FinetuneMode mode = mode_s == "adaptation" ? nn::FinetuneMode::adaptation
                                                   : nn::FinetuneMode::confusion;
    std::filesystem::create_directories(out);
    write_manifest(out, cfg, seed, "finetune");

    nn::Params params = nn::load_checkpoint(cfg.at("checkpoint").get<std::string>());
    auto synth = load_train_examples(cfg.at("dataset_dir").get<std::string>(), params.cfg.max_len);
    auto real = load_real_mels(cfg.at("real_dir").get<std::string>());

    nn::Adam opt_model({cfg.value("lr_model", 1e-5)});
    nn::Adam opt_disc({cfg.value("lr_disc", 1e-4)});
    double lambda = cfg.value("lambda", 0.01);
    int64_t steps = cfg.at("steps").get<int64_t>();
    size_t batch_size = cfg.value("batch_size", size_t(4));
    int64_t ckpt_every = cfg.value("checkpoint_every", int64_t(0));

    Rng rng(mix_seed(seed, 11));
    std::ofstream metrics(std::filesystem::path(out) / "metrics.jsonl");
    for (int64_t s = 0; s < steps; ++s) {
        std::vector<nn::TrainExample> sb;
        std::vector<MelSegment> rb;
        for (size_t b = 0; b < batch_size; ++b) {
            sb.push_back(synth[size_t(rng.uniform_int(0, int64_t(synth.size()) - 1))]);
            rb.push_back(real[size_t(rng.uniform_int(0, int64_t(real.size()) - 1))]);
        }
        nn::LossReport rep =
            nn::confusion_step(sb, rb, params, opt_model, opt_disc, mode, lambda, rng, s);
        append_metrics(metrics, rep);
        if (s % 20 == 0)
            log(LogLevel::info, "step " + std::to_string(s) + " ce " +
                                    std::to_string(rep.transcription_ce) + " disc " +
                                    std::to_string(rep.disc_loss));
        if (ckpt_every > 0 && (s + 1) % ckpt_every == 0)
            nn::save_checkpoint(std::filesystem::path(out) /
                                    ("ckpt_" + std::to_string(s + 1) + ".samt"),
                                params);
    }
    nn::save_checkpoint(std::filesystem::path(out) / "model.samt", params);
    return 0;
}

int cmd_transcribe(const Common& com, const std::string& audio_arg,
                   const std::string& checkpoint_arg) {
    std::string audio_path = audio_arg, ckpt = checkpoint_arg;
    if (!com.config_path.empty()) {
        json cfg = load_config(com.config_path);
        if (audio_path.empty()) audio_path = cfg.value("audio", "");
        if (ckpt.empty()) ckpt = cfg.value("checkpoint", "");
    }
    if (audio_path.empty() || ckpt.empty())
        throw std::runtime_error("transcribe: need an audio path and a checkpoint");
    std::string out = com.out.empty() ? "transcribed" : com.out;
    std::filesystem::create_directories(out);

    nn::Params params = nn::load_checkpoint(ckpt);

    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(audio_path)) {
        for (const auto& e : std::filesystem::directory_iterator(audio_path))
            if (e.path().extension() == ".wav") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(audio_path);
    }

    int failures = 0;
    for (const auto& f : files) {
        try {
            AudioBuffer a = resample_to_rate(wav_read(f), 16000);
            NoteList notes = transcribe_buffer(a, params);
            auto bytes = write_smf(notes);
            auto out_path = std::filesystem::path(out) / (f.stem().string() + ".mid");
            std::ofstream of(out_path, std::ios::binary);
            of.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
            log(LogLevel::info, f.filename().string() + " -> " + out_path.string() + " (" +
                                    std::to_string(notes.notes.size()) + " notes)");
        } catch (const std::exception& e) {
            log(LogLevel::error, f.string() + ": " + e.what());
            failures++; // keep going; per-file errors don't stop the batch
        }
    }
    return failures == int(files.size()) && !files.empty() ? 1 : 0;
}

int cmd_evaluate(const Common& com, const std::string& est_arg, const std::string& ref_arg) {
    std::string est = est_arg, ref = ref_arg;
    if (!com.config_path.empty()) {
        json cfg = load_config(com.config_path);
        if (est.empty()) est = cfg.value("est_dir", "");
        if (ref.empty()) ref = cfg.value("ref_dir", "");
    }
    if (est.empty() || ref.empty())
        throw std::runtime_error("evaluate: need estimate and reference directories");

    DirEvalResult res = evaluate_dirs(est, ref, MatchConfig{}, com.threads);
    std::cout << eval_table(res);
    if (!com.out.empty()) {
        std::filesystem::create_directories(com.out);
        std::ofstream f(std::filesystem::path(com.out) / "eval.json");
        f << eval_json(res) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"annotation-free music transcription pipeline"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    Common com;
    app.add_option("--config", com.config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", com.seed, "master seed (overrides config)");
    app.add_option("--mode", com.mode, "confusion|adaptation")
        ->check(CLI::IsMember({"confusion", "adaptation"}));
    app.add_option("--threads", com.threads, "worker threads (1 = bitwise reproducible)");
    app.add_option("--out", com.out, "output directory");

    auto* render = app.add_subcommand("render", "render a synthetic dataset");
    auto* train = app.add_subcommand("train", "pre-train on a rendered dataset");
    auto* finetune = app.add_subcommand("finetune", "domain-confusion fine-tuning");
    auto* transcribe = app.add_subcommand("transcribe", "audio -> MIDI");
    auto* evaluate = app.add_subcommand("evaluate", "score estimates against references");

    std::string audio_arg, ckpt_arg, est_arg, ref_arg;
    transcribe->add_option("audio", audio_arg, "audio file or directory");
    transcribe->add_option("checkpoint", ckpt_arg, "model checkpoint");
    evaluate->add_option("est", est_arg, "estimate directory");
    evaluate->add_option("ref", ref_arg, "reference directory");

    CLI11_PARSE(app, argc, argv);
    com.seed_set = seed_opt->count() > 0;

    try {
        if (render->parsed()) return cmd_render(com);
        if (train->parsed()) return cmd_train(com);
        if (finetune->parsed()) return cmd_finetune(com);
        if (transcribe->parsed()) return cmd_transcribe(com, audio_arg, ckpt_arg);
        if (evaluate->parsed()) return cmd_evaluate(com, est_arg, ref_arg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
