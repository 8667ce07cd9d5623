// Acceptance harness: one pass/fail line per criterion. Criteria can be
// selected by number on the command line (default: all).

#include "synthamt/metrics.hpp"
#include "synthamt/pipeline.hpp"
#include "synthamt/training.hpp"

#include "../support/fixtures.hpp"
#include "../support/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace synthamt;
using namespace synthamt::testsup;
namespace nn = synthamt::nn;

namespace {

struct Clock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double s() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

int64_t env_steps(const char* name, int64_t fallback) {
    const char* e = std::getenv(name);
    return e ? std::atoll(e) : fallback;
}

// ---------------------------------------------------------------------------
// criterion 1: codec round trip
// ---------------------------------------------------------------------------

NoteList random_piece(Rng& rng, double dur_s, size_t max_notes) {
    NoteList piece;
    piece.duration_s = dur_s;
    std::map<int, std::vector<std::pair<double, double>>> spans;
    size_t want = size_t(rng.uniform_int(1, int64_t(max_notes)));
    for (size_t i = 0; i < 3 * want && piece.notes.size() < want; ++i) {
        int pitch = int(rng.uniform_int(0, 127));
        double on = rng.uniform(-0.5, dur_s);
        double off = on + rng.uniform(0.012, 1.8);
        bool clash = false;
        for (auto [a, b] : spans[pitch])
            if (on < b + 0.03 && off > a - 0.03) clash = true;
        if (clash) continue;
        piece.notes.push_back({pitch, on, off, 64, 1});
        spans[pitch].emplace_back(on, off);
    }
    piece.sort_notes();
    return piece;
}

// quantize_notes plus the codec's continuing-note rule: a note truncated at
// the segment edge decodes to the segment end, not the clamped last bin
NoteList quantize_segment(const SlicedSegment& s, double seg_dur) {
    NoteList q = quantize_notes(s.notes);
    for (int p : s.continuing) {
        NoteEvent* last = nullptr;
        for (auto& n : q.notes)
            if (n.pitch == p && (!last || n.onset_s > last->onset_s)) last = &n;
        if (last) last->offset_s = seg_dur;
    }
    return q;
}

bool same_spans(const NoteList& a, const NoteList& b) {
    if (a.notes.size() != b.notes.size()) return false;
    for (size_t i = 0; i < a.notes.size(); ++i) {
        const auto &x = a.notes[i], &y = b.notes[i];
        if (x.pitch != y.pitch || std::abs(x.onset_s - y.onset_s) > 1e-9 ||
            std::abs(x.offset_s - y.offset_s) > 1e-9)
            return false;
    }
    return true;
}

Outcome criterion1() {
    Clock clk;
    Rng rng(0xC1);
    const double seg = vocab::SEGMENT_S;

    // single segments with genuine held-over / continuing sets
    for (int trial = 0; trial < 10000; ++trial) {
        NoteList src = random_piece(rng, seg + 1.0, 24);
        SlicedSegment s = slice_notes(src, 0.0, seg);
        if (s.notes.notes.size() > 24) continue;
        TokenSeq toks = encode(s.notes, s.held_over, s.continuing);
        DecodeResult d = decode(toks);
        if (!same_spans(d.notes, quantize_segment(s, seg)) || d.held_over != s.held_over ||
            d.continuing != s.continuing)
            return {false, "segment round-trip mismatch at trial " + std::to_string(trial)};
    }

    // 3-segment pieces: slice -> encode -> decode -> join against an
    // independently fused slice -> quantize reference
    for (int trial = 0; trial < 2000; ++trial) {
        NoteList piece = random_piece(rng, 3 * seg, 24);
        for (auto& n : piece.notes) {
            n.onset_s = std::max(0.0, n.onset_s);
            n.offset_s = std::min(piece.duration_s, n.offset_s);
        }
        piece.notes.erase(std::remove_if(piece.notes.begin(), piece.notes.end(),
                                         [&](const NoteEvent& n) {
                                             return n.offset_s - n.onset_s < 1e-6;
                                         }),
                          piece.notes.end());

        std::vector<DecodeResult> decs;
        std::vector<double> starts;
        NoteList expect; // oracle: quantized slices fused across boundaries
        expect.duration_s = piece.duration_s;
        std::map<int, size_t> open;
        for (int k = 0; k < 3; ++k) {
            double t0 = k * seg;
            SlicedSegment s = slice_notes(piece, t0, seg);
            decs.push_back(decode(encode(s.notes, s.held_over, s.continuing)));
            starts.push_back(t0);

            NoteList q = quantize_segment(s, seg);
            std::map<int, size_t> next_open;
            std::set<int> tie_used;
            for (NoteEvent n : q.notes) {
                bool tie = s.held_over.count(n.pitch) && n.onset_s == 0.0 &&
                           !tie_used.count(n.pitch);
                bool cont = s.continuing.count(n.pitch) && n.offset_s >= seg - 1e-9;
                n.onset_s += t0;
                n.offset_s += t0;
                if (tie) {
                    tie_used.insert(n.pitch);
                    auto it = open.find(n.pitch);
                    if (it != open.end()) {
                        expect.notes[it->second].offset_s = n.offset_s;
                        if (cont) next_open[n.pitch] = it->second;
                        continue;
                    }
                }
                expect.notes.push_back(n);
                if (cont) next_open[n.pitch] = expect.notes.size() - 1;
            }
            open = std::move(next_open);
        }
        expect.sort_notes();

        NoteList joined = join_segments(decs, starts);
        joined.sort_notes();
        if (!same_spans(joined, expect))
            return {false, "join mismatch at trial " + std::to_string(trial)};
    }

    double secs = clk.s();
    if (secs >= 30.0)
        return {false, "round trips exact but took " + std::to_string(secs) + " s (>= 30)"};
    char buf[128];
    std::snprintf(buf, sizeof buf, "10000 segments + 2000 joins exact in %.1f s", secs);
    return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 2: formula fidelity
// ---------------------------------------------------------------------------

Outcome criterion2() {
    for (int v = 1; v <= 127; ++v) {
        long double want = std::log(1.0L + (long double)v / 127.0L) / std::log(2.0L);
        if (std::abs(velocity_amplitude(v) - double(want)) > 1e-12)
            return {false, "velocity_amplitude(" + std::to_string(v) + ") off"};
    }

    // golden table, written out independently of the implementation
    auto want_group = [](int p) {
        if (p <= 8) return InstrumentGroup::keyboard;
        if (p <= 16) return InstrumentGroup::mallet;
        if (p <= 24) return InstrumentGroup::organ;
        if (p <= 32) return InstrumentGroup::guitar;
        if (p <= 40) return InstrumentGroup::bass;
        if (p <= 56) return InstrumentGroup::strings;
        if (p <= 64) return InstrumentGroup::brass;
        if (p <= 72) return InstrumentGroup::reed;
        if (p <= 80) return InstrumentGroup::flute;
        if (p <= 96) return InstrumentGroup::synth_vocal;
        if (p >= 105 && p <= 112) return InstrumentGroup::guitar;
        return InstrumentGroup::unsupported;
    };
    for (int p = 1; p <= 128; ++p)
        if (program_to_group(p) != want_group(p))
            return {false, "program_to_group(" + std::to_string(p) + ") off"};
    return {true, "velocity formula within 1e-12 on v=1..127; group table exact on 128 programs"};
}

// ---------------------------------------------------------------------------
// criterion 3: renderer determinism, linearity, onset placement
// ---------------------------------------------------------------------------

Outcome criterion3() {
    SampleBank bank = make_bank(48, 84);
    RenderConfig cfg;

    // byte-identical renders per seed
    {
        MixedTimbre t(bank, "add0", "add2", 0.9);
        Rng g(0xC3);
        NoteList notes = random_mono_notes(g, 2.56);
        Rng r1(5), r2(5);
        AudioBuffer a = render_segment(notes, t, cfg, r1);
        AudioBuffer b = render_segment(notes, t, cfg, r2);
        if (a.samples != b.samples) return {false, "fixed-seed renders differ"};
    }

    // pre-limiter linearity
    {
        MixedTimbre t(bank, "add1", "add0", 0.5);
        RenderConfig lin = cfg;
        for (auto& [g, r] : lin.release_ranges) r = {0.3, 0.3};
        Rng g(0xC4);
        NoteList all = random_mono_notes(g, 2.56);
        Rng r0(6);
        AudioBuffer whole = render_segment_raw(all, t, lin, r0);
        std::vector<double> sum(whole.samples.size(), 0.0);
        for (const NoteEvent& n : all.notes) {
            NoteList one;
            one.notes = {n};
            one.duration_s = all.duration_s;
            Rng ri(6);
            AudioBuffer part = render_segment_raw(one, t, lin, ri);
            for (size_t i = 0; i < sum.size(); ++i) sum[i] += part.samples[i];
        }
        for (size_t i = 0; i < sum.size(); ++i)
            if (std::abs(sum[i] - whole.samples[i]) > 1e-6)
                return {false, "overlay-add nonlinearity at sample " + std::to_string(i)};
    }

    // energy-onset placement on 100 random notes
    Rng rng(0xC5);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        MixedTimbre t = bank.draw_mixed_timbre(rng);
        NoteEvent n;
        n.pitch = int(rng.uniform_int(48, 84));
        n.velocity = int(rng.uniform_int(40, 127));
        n.onset_s = rng.uniform(0.05, 1.8);
        n.offset_s = n.onset_s + rng.uniform(0.2, 0.6);
        NoteList one;
        one.notes = {n};
        one.duration_s = 2.56;
        AudioBuffer out = render_segment_raw(one, t, cfg, rng);
        float pk = 0.0f;
        for (float s : out.samples) pk = std::max(pk, std::abs(s));
        size_t first = out.samples.size();
        for (size_t k = 0; k < out.samples.size(); ++k)
            if (std::abs(out.samples[k]) > 0.02f * pk) { first = k; break; }
        double err = std::abs(double(first) / 16000.0 - n.onset_s);
        worst = std::max(worst, err);
        if (err > 0.010)
            return {false, "note " + std::to_string(i) + " energy onset off by " +
                               std::to_string(err * 1000) + " ms"};
    }
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "deterministic, linear to 1e-6, worst onset error %.2f ms over 100 notes",
                  worst * 1000);
    return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 4: gradient correctness
// ---------------------------------------------------------------------------

Outcome criterion4() {
    Clock clk;
    std::vector<std::string> report;
    double worst_f32 = gradcheck::run_all(report);
    if (worst_f32 > 1e-3) {
        for (auto& l : report) std::printf("    %s\n", l.c_str());
        return {false, "float32 worst rel err " + std::to_string(worst_f32) + " > 1e-3"};
    }

#ifdef GRADCHECK_F64_BIN
    std::string cmd = std::string("\"") + GRADCHECK_F64_BIN + "\" > /dev/null";
    int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "float64 build failed its 1e-6 checks (see gradcheck_f64)"};
#endif
    double secs = clk.s();
    if (secs >= 300.0) return {false, "gradchecks passed but took too long"};
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "f32 worst rel err %.2e (tol 1e-3); f64 build within 1e-6; %.0f s", worst_f32,
                  secs);
    return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracle equivalence
// ---------------------------------------------------------------------------

bool pair_ok(const NoteEvent& r, const NoteEvent& e, const MatchConfig& cfg, bool with_offset) {
    if (r.pitch != e.pitch || std::abs(r.onset_s - e.onset_s) > cfg.onset_tol_s) return false;
    if (with_offset) {
        double tol = std::max(cfg.offset_tol_s, cfg.offset_ratio * (r.offset_s - r.onset_s));
        if (std::abs(r.offset_s - e.offset_s) > tol) return false;
    }
    return true;
}

void brute_rec(const NoteList& ref, const NoteList& est, const MatchConfig& cfg, bool wo,
               size_t ri, std::vector<bool>& used, size_t card, double cost, size_t& best_card,
               double& best_cost) {
    if (ri == ref.notes.size()) {
        if (card > best_card || (card == best_card && cost < best_cost - 1e-12)) {
            best_card = card;
            best_cost = cost;
        }
        return;
    }
    brute_rec(ref, est, cfg, wo, ri + 1, used, card, cost, best_card, best_cost);
    for (size_t ei = 0; ei < est.notes.size(); ++ei) {
        if (used[ei] || !pair_ok(ref.notes[ri], est.notes[ei], cfg, wo)) continue;
        used[ei] = true;
        brute_rec(ref, est, cfg, wo, ri + 1, used, card + 1,
                  cost + std::abs(ref.notes[ri].onset_s - est.notes[ei].onset_s), best_card,
                  best_cost);
        used[ei] = false;
    }
}

Outcome criterion5() {
    Rng rng(0xC5C5);
    MatchConfig cfg;

    auto random_side = [&](size_t maxn) {
        NoteList out;
        size_t n = size_t(rng.uniform_int(0, int64_t(maxn)));
        for (size_t i = 0; i < n; ++i) {
            double on = rng.uniform(0.0, 1.5);
            out.notes.push_back({int(rng.uniform_int(60, 63)), on, on + rng.uniform(0.05, 0.7),
                                 64, 1});
        }
        out.duration_s = 2.5;
        out.sort_notes();
        return out;
    };

    for (int trial = 0; trial < 1000; ++trial) {
        NoteList ref = random_side(8), est = random_side(8);
        for (bool wo : {false, true}) {
            auto m = match_notes(ref, est, cfg, wo);
            double cost = 0.0;
            std::set<size_t> rs, es;
            for (auto [ri, ei] : m) {
                if (!pair_ok(ref.notes[ri], est.notes[ei], cfg, wo))
                    return {false, "invalid pair in matching"};
                rs.insert(ri);
                es.insert(ei);
                cost += std::abs(ref.notes[ri].onset_s - est.notes[ei].onset_s);
            }
            if (rs.size() != m.size() || es.size() != m.size())
                return {false, "matching is not one-to-one"};
            size_t bc = 0;
            double bcost = 1e18;
            std::vector<bool> used(est.notes.size(), false);
            brute_rec(ref, est, cfg, wo, 0, used, 0, 0.0, bc, bcost);
            if (m.size() != bc)
                return {false, "cardinality " + std::to_string(m.size()) + " != optimal " +
                                   std::to_string(bc) + " at trial " + std::to_string(trial)};
            if (bc > 0 && std::abs(cost - bcost) > 1e-9)
                return {false, "onset cost not minimal at trial " + std::to_string(trial)};
        }
    }

    // hand cases for the 50 ms onset rule
    {
        NoteList ref, est;
        ref.notes = {{60, 0.000, 0.5, 64, 1}}; // onset 0: the 50 ms gap is exact
        ref.duration_s = est.duration_s = 2.0;
        est.notes = {{60, 0.050, 0.55, 64, 1}};
        if (match_notes(ref, est, cfg, false).size() != 1)
            return {false, "exactly-50ms onset should match"};
        est.notes = {{60, 0.0501, 0.55, 64, 1}};
        if (!match_notes(ref, est, cfg, false).empty())
            return {false, "51ms onset must not match"};
        est.notes = {{61, 0.0, 0.5, 64, 1}};
        if (!match_notes(ref, est, cfg, false).empty())
            return {false, "pitch mismatch must not match"};
        ref.notes = {{60, 0.0, 1.0, 64, 1}};
        est.notes = {{60, 0.0, 1.19, 64, 1}};
        if (match_notes(ref, est, cfg, true).size() != 1)
            return {false, "offset within 20% of ref length should match"};
        est.notes = {{60, 0.0, 1.21, 64, 1}};
        if (!match_notes(ref, est, cfg, true).empty())
            return {false, "offset beyond 20% of ref length must not match"};
    }

    for (int trial = 0; trial < 1000; ++trial) {
        EvalReport r = evaluate(random_side(8), random_side(8), cfg);
        if (r.F > r.Fn + 1e-12) return {false, "F > Fn at trial " + std::to_string(trial)};
    }
    return {true, "matches exhaustive optimum on 1000 instances; boundary cases and F <= Fn hold"};
}

// ---------------------------------------------------------------------------
// shared toy-training machinery for criteria 6-8
// ---------------------------------------------------------------------------

nn::ModelConfig toy_config() {
    nn::ModelConfig cfg;
    cfg.embed = 96;
    cfg.ff = 192;
    cfg.heads = 4;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.max_len = 96;
    cfg.disc_hidden = 64;
    return cfg;
}

std::vector<nn::TrainExample> render_examples(const SampleBank& bank,
                                              const std::vector<std::pair<int, NoteList>>& pool,
                                              size_t count, uint64_t seed,
                                              std::vector<NoteList>* refs = nullptr,
                                              std::vector<AudioBuffer>* audio = nullptr,
                                              size_t audio_cap = SIZE_MAX) {
    RenderConfig rc;
    std::vector<nn::TrainExample> out;
    size_t attempts = 0;
    while (out.size() < count && attempts < count * 4) {
        Rng rng = rng_for_example(seed, attempts);
        attempts++;
        SegmentExample ex = synth_example(pool, bank, rc, rng);
        nn::TrainExample te;
        try {
            te.tokens = encode(ex.notes, ex.held_over, ex.continuing, 96).ids;
        } catch (const TruncationError&) {
            continue;
        }
        te.mel = melspec(ex.audio);
        out.push_back(std::move(te));
        if (refs) refs->push_back(ex.notes);
        if (audio && audio->size() < audio_cap) audio->push_back(ex.audio);
    }
    return out;
}

double pretrain(nn::Params& params, const std::vector<nn::TrainExample>& train, int64_t steps,
                size_t batch_size, double lr, uint64_t seed, double stop_below = -1.0) {
    nn::Adam opt({lr});
    Rng rng(mix_seed(seed, 0xba7c4));
    double ce = 0.0;
    // linear warmup into a cosine decay towards 0.1 * lr; temporal alignment
    // does not converge under a constant learning rate at this scale
    const int64_t warmup = std::min<int64_t>(500, steps / 10 + 1);
    for (int64_t s = 0; s < steps; ++s) {
        double sched = s < warmup ? double(s + 1) / double(warmup)
                                  : 0.1 + 0.45 * (1.0 + std::cos(M_PI * double(s - warmup) /
                                                                 double(steps - warmup)));
        opt.set_lr(lr * sched);
        std::vector<nn::TrainExample> batch;
        for (size_t b = 0; b < batch_size; ++b)
            batch.push_back(train[size_t(rng.uniform_int(0, int64_t(train.size()) - 1))]);
        ce = nn::pretrain_step(batch, params, opt, s, mix_seed(seed, uint64_t(s))).transcription_ce;
        if (stop_below > 0 && ce < stop_below) break;
    }
    return ce;
}

struct FnResult {
    double fn = 0.0, f = 0.0, ac = 0.0;
};

FnResult mean_fn(const nn::Params& params, const std::vector<nn::TrainExample>& test,
                 const std::vector<NoteList>& refs) {
    FnResult r;
    for (size_t i = 0; i < test.size(); ++i) {
        TokenSeq toks = nn::greedy_transcribe(test[i].mel, params);
        DecodeResult d = decode(toks);
        EvalReport rep = evaluate(refs[i], d.notes);
        r.fn += rep.Fn;
        r.f += rep.F;
        r.ac += rep.Ac;
    }
    r.fn /= double(test.size());
    r.f /= double(test.size());
    r.ac /= double(test.size());
    return r;
}

struct SharedState {
    bool trained = false;
    nn::Params params;            // pretrained toy model
    std::vector<nn::TrainExample> train, test;
    std::vector<NoteList> test_refs;
    std::vector<AudioBuffer> test_audio, train_audio;
};

SharedState g_shared;

void ensure_pretrained(SharedState& st) {
    if (st.trained) return;
    SampleBank bank = make_bank(48, 84);
    auto pool = make_midi_pool(0xD0, 60, 4.0);
    // 6000 segments: small enough for the time budget, large enough that the
    // model cannot memorize per-segment onset bins and must localize instead.
    // Raw audio is kept for a 256-segment slice only (criterion 8's probe and
    // fine-tuning pools); the mels alone already dominate the memory budget.
    st.train = render_examples(bank, pool, 6000, 0xA11CE, nullptr, &st.train_audio, 256);
    st.test = render_examples(bank, pool, 32, 0xB0B, &st.test_refs, &st.test_audio);
    Rng init(0x1417);
    st.params = nn::init_params(toy_config(), init);
    int64_t steps = env_steps("SYNTHAMT_ACCEPT_PRETRAIN_STEPS", 20000);
    // SYNTHAMT_ACCEPT_CACHE=<path>: reuse the pretrained checkpoint when
    // iterating on the later criteria. Pretraining is deterministic, so the
    // cache is bit-identical to retraining as long as the recipe matches.
    const char* cache = std::getenv("SYNTHAMT_ACCEPT_CACHE");
    if (cache && std::filesystem::exists(cache)) {
        st.params = nn::load_checkpoint(cache);
    } else {
        pretrain(st.params, st.train, steps, 8, 1e-3, 0xF00D);
        if (cache) nn::save_checkpoint(cache, st.params);
    }
    st.trained = true;
}

// ---------------------------------------------------------------------------
// criterion 6: overfit sanity
// ---------------------------------------------------------------------------

Outcome criterion6() {
    Clock clk;
    SampleBank bank = make_bank(48, 84);
    auto pool = make_midi_pool(0xD6, 20, 4.0);
    auto train = render_examples(bank, pool, 8, 0x5E6);
    if (train.size() != 8) return {false, "could not render 8 segments"};

    Rng init(0x61);
    nn::Params params = nn::init_params(toy_config(), init);

    nn::Adam opt({1e-3});
    double first_ce = 0.0, ce = 0.0;
    int64_t steps_used = 0;
    for (int64_t s = 0; s < 2000; ++s) {
        ce = nn::pretrain_step(train, params, opt, s, mix_seed(0x66, uint64_t(s)))
                 .transcription_ce;
        if (s == 0) first_ce = ce;
        steps_used = s + 1;
        if (ce < 0.02) break;
    }
    if (std::abs(first_ce - std::log(389.0)) > 0.3)
        return {false, "initial CE " + std::to_string(first_ce) + " not within 0.3 of ln(389)"};
    if (ce >= 0.05)
        return {false, "CE " + std::to_string(ce) + " after 2000 steps (need < 0.05)"};

    for (size_t i = 0; i < train.size(); ++i) {
        TokenSeq got = nn::greedy_transcribe(train[i].mel, params);
        if (got.ids != train[i].tokens)
            return {false, "greedy decode differs from target on segment " + std::to_string(i)};
    }
    double secs = clk.s();
    if (secs >= 1200.0) return {false, "overfit succeeded but over the 20 min budget"};
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "init CE %.2f, CE %.3f after %lld steps, 8/8 greedy exact, %.0f s", first_ce,
                  ce, (long long)steps_used, secs);
    return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 7: desk-scale pipeline
// ---------------------------------------------------------------------------

Outcome criterion7() {
    Clock clk;
    ensure_pretrained(g_shared);
    FnResult r = mean_fn(g_shared.params, g_shared.test, g_shared.test_refs);
    double secs = clk.s();
    char buf[160];
    std::snprintf(buf, sizeof buf, "held-out Fn %.3f (need >= 0.85), F %.3f, Ac %.3f, %.0f s",
                  r.fn, r.f, r.ac, secs);
    if (r.fn < 0.85 || secs >= 7200.0) return {false, buf};
    return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 8: domain-confusion effect
// ---------------------------------------------------------------------------

// deep copy through the checkpoint container
nn::Params clone_params(const nn::Params& p) {
    auto path = std::filesystem::temp_directory_path() / "synthamt_accept_clone.samt";
    nn::save_checkpoint(path, p);
    nn::Params q = nn::load_checkpoint(path);
    std::filesystem::remove(path);
    return q;
}

std::vector<nn::Mat> encode_all(const nn::Params& params,
                                const std::vector<MelSegment>& mels) {
    nn::NoGradGuard g;
    std::vector<nn::Mat> out;
    for (const auto& m : mels) out.push_back(nn::encode_mel(m, params)->val);
    return out;
}

void reinit_disc(nn::Params& params, Rng& rng) {
    for (auto& [name, node] : params.disc_params()) {
        double bound = std::sqrt(6.0 / double(node->val.rows + node->val.cols));
        bool is_bias = node->val.rows == 1 && name.find(".b") != std::string::npos;
        for (auto& v : node->val.d) v = is_bias ? nn::Real(0) : nn::Real(rng.uniform(-bound, bound));
    }
}

// Train a fresh probe discriminator on frozen encoder outputs, return its
// accuracy on held-out windows.
double probe_accuracy(nn::Params& params, const std::vector<MelSegment>& synth_mels,
                      const std::vector<MelSegment>& real_mels, uint64_t seed) {
    size_t n_tr_s = synth_mels.size() * 3 / 4, n_tr_r = real_mels.size() * 3 / 4;
    auto synth_mem = encode_all(params, synth_mels);
    auto real_mem = encode_all(params, real_mels);

    Rng rng(seed);
    reinit_disc(params, rng);
    nn::Adam opt({1e-3});
    int window_max = params.cfg.frames - params.cfg.disc_window;
    int64_t steps = env_steps("SYNTHAMT_ACCEPT_PROBE_STEPS", 600);

    for (int64_t s = 0; s < steps; ++s) {
        std::vector<nn::NodePtr> losses;
        for (int b = 0; b < 8; ++b) {
            bool real = b % 2 == 1;
            const auto& mem = real ? real_mem[size_t(rng.uniform_int(0, int64_t(n_tr_r) - 1))]
                                   : synth_mem[size_t(rng.uniform_int(0, int64_t(n_tr_s) - 1))];
            int w = int(rng.uniform_int(0, window_max));
            auto p = nn::discriminate(nn::constant(mem), w, params);
            losses.push_back(nn::bce_loss(p, nn::Real(real ? 1 : 0)));
        }
        auto loss = nn::mean_scalars(losses);
        params.zero_grad();
        nn::backward(loss);
        opt.step(params.disc_params());
    }

    // held-out accuracy, several windows per held-out mel
    nn::NoGradGuard g;
    size_t correct = 0, total = 0;
    Rng erng(mix_seed(seed, 1));
    auto eval_side = [&](const std::vector<nn::Mat>& mem, size_t from, bool real) {
        for (size_t i = from; i < mem.size(); ++i)
            for (int k = 0; k < 8; ++k) {
                int w = int(erng.uniform_int(0, window_max));
                double p = double(nn::discriminate(nn::constant(mem[i]), w, params)->scalar());
                correct += (p > 0.5) == real ? 1 : 0;
                total++;
            }
    };
    eval_side(synth_mem, n_tr_s, false);
    eval_side(real_mem, n_tr_r, true);
    return double(correct) / double(total);
}

struct ConfusionRun {
    double probe_before = 0.0, probe_after = 0.0;
    double fn_before = 0.0, fn_after = 0.0;
};

ConfusionRun run_confusion(const SharedState& st, nn::FinetuneMode mode, uint64_t seed) {
    ConfusionRun out;

    // "real" domain: corrupted renders of held-out synthetic audio
    std::vector<MelSegment> real_train, synth_probe;
    for (size_t i = 0; i < st.train_audio.size(); ++i) {
        AudioBuffer r = nn::realify(st.train_audio[i], mix_seed(seed, i));
        real_train.push_back(melspec(r));
        synth_probe.push_back(st.train[i].mel);
    }

    std::vector<MelSegment> real_test;
    std::vector<NoteList> real_test_refs = st.test_refs;
    for (size_t i = 0; i < st.test_audio.size(); ++i)
        real_test.push_back(melspec(nn::realify(st.test_audio[i], mix_seed(seed ^ 0x7e57, i))));

    nn::Params model = clone_params(st.params);

    out.probe_before = probe_accuracy(model, synth_probe, real_train, mix_seed(seed, 100));
    {
        std::vector<nn::TrainExample> rt;
        for (size_t i = 0; i < real_test.size(); ++i)
            rt.push_back({real_test[i], {}});
        out.fn_before = mean_fn(model, rt, real_test_refs).fn;
    }

    // adversarial fine-tuning per the published recipe: lambda 0.01,
    // model lr 1e-5, discriminator lr 1e-4
    nn::Adam opt_model({1e-5}), opt_disc({1e-4});
    Rng rng(mix_seed(seed, 200));
    int64_t steps = env_steps("SYNTHAMT_ACCEPT_CONFUSION_STEPS", 1200);
    for (int64_t s = 0; s < steps; ++s) {
        std::vector<nn::TrainExample> sb;
        std::vector<MelSegment> rb;
        for (int b = 0; b < 4; ++b) {
            sb.push_back(st.train[size_t(rng.uniform_int(0, int64_t(st.train.size()) - 1))]);
            rb.push_back(real_train[size_t(rng.uniform_int(0, int64_t(real_train.size()) - 1))]);
        }
        nn::confusion_step(sb, rb, model, opt_model, opt_disc, mode, 0.01, rng, s);
        // trajectory diagnostics on a clone so the probe's discriminator
        // reinit cannot perturb the run itself
        if (steps >= 8 && (s + 1) % (steps / 4) == 0 && s + 1 < steps) {
            nn::Params snap = clone_params(model);
            double p = probe_accuracy(snap, synth_probe, real_train, mix_seed(seed, 400 + s));
            std::printf("      step %lld: probe %.3f\n", (long long)(s + 1), p);
            std::fflush(stdout);
        }
    }

    out.probe_after = probe_accuracy(model, synth_probe, real_train, mix_seed(seed, 300));
    {
        std::vector<nn::TrainExample> rt;
        for (size_t i = 0; i < real_test.size(); ++i)
            rt.push_back({real_test[i], {}});
        out.fn_after = mean_fn(model, rt, real_test_refs).fn;
    }
    return out;
}

Outcome criterion8() {
    ensure_pretrained(g_shared);

    ConfusionRun conf = run_confusion(g_shared, nn::FinetuneMode::confusion, 0xC8);
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "confusion: probe %.3f -> %.3f (need >= 0.90, <= 0.70), corrupted-domain Fn "
                  "%.3f -> %.3f (need +0.03)",
                  conf.probe_before, conf.probe_after, conf.fn_before, conf.fn_after);
    std::printf("    %s\n", buf);
    std::fflush(stdout);

    bool ok = conf.probe_before >= 0.90 && conf.probe_after <= 0.70 &&
              conf.fn_after - conf.fn_before >= 0.03;
    if (std::getenv("SYNTHAMT_ACCEPT_CONFUSION_ONLY")) return {ok, buf};

    ConfusionRun adapt = run_confusion(g_shared, nn::FinetuneMode::adaptation, 0xAD);
    char buf2[320];
    std::snprintf(buf2, sizeof buf2,
                  "adaptation: probe %.3f -> %.3f, corrupted-domain Fn %.3f -> %.3f",
                  adapt.probe_before, adapt.probe_after, adapt.fn_before, adapt.fn_after);
    std::printf("    %s\n", buf2);
    return {ok, buf};
}

// ---------------------------------------------------------------------------
// criterion 9: sampler statistics
// ---------------------------------------------------------------------------

Outcome criterion9() {
    const int n = 100000;
    for (auto sizes : std::vector<std::vector<size_t>>{{1000, 10}, {100, 100, 100}}) {
        nn::BalancedSampler sampler(sizes);
        auto want = nn::balanced_probabilities(sizes);
        std::vector<int> hits(sizes.size(), 0);
        Rng rng(0xC9);
        for (int i = 0; i < n; ++i) {
            auto [ds, ex] = sampler.draw(rng);
            if (ds >= sizes.size() || ex >= sizes[ds]) return {false, "draw out of range"};
            hits[ds]++;
        }
        for (size_t k = 0; k < sizes.size(); ++k) {
            double got = double(hits[k]) / n;
            double sigma = std::sqrt(want[k] * (1 - want[k]) / n);
            if (std::abs(got - want[k]) > 3 * sigma)
                return {false, "dataset " + std::to_string(k) + " frequency " +
                                   std::to_string(got) + " outside 3 sigma of " +
                                   std::to_string(want[k])};
        }
    }
    return {true, "empirical frequencies within 3 sigma for {1000,10} and {100,100,100}"};
}

} // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int num;
        const char* name;
        Outcome (*fn)();
    };
    const std::vector<Criterion> all = {
        {1, "codec round-trip", criterion1},
        {2, "formula fidelity", criterion2},
        {3, "renderer determinism and linearity", criterion3},
        {4, "gradient correctness", criterion4},
        {5, "metric oracle equivalence", criterion5},
        {6, "overfit sanity", criterion6},
        {7, "desk-scale pipeline", criterion7},
        {8, "domain-confusion effect", criterion8},
        {9, "sampler statistics", criterion9},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.num)) continue;
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d (%s): %s — %s\n", c.num, c.name, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) failures++;
    }
    return failures == 0 ? 0 : 1;
}
