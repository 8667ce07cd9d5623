#include "synthamt/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace synthamt::nn {

void Adam::step(const std::vector<std::pair<std::string, NodePtr>>& params) {
    t_++;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (const auto& [name, p] : params) {
        p->ensure_grad();
        auto it = state_.find(name);
        if (it == state_.end())
            it = state_.emplace(name, std::make_pair(Mat(p->val.rows, p->val.cols),
                                                      Mat(p->val.rows, p->val.cols))).first;
        Mat& m = it->second.first;
        Mat& v = it->second.second;
        for (size_t i = 0; i < p->val.size(); ++i) {
            double g = double(p->grad.d[i]);
            double mi = cfg_.beta1 * double(m.d[i]) + (1.0 - cfg_.beta1) * g;
            double vi = cfg_.beta2 * double(v.d[i]) + (1.0 - cfg_.beta2) * g * g;
            m.d[i] = Real(mi);
            v.d[i] = Real(vi);
            p->val.d[i] -= Real(cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
        }
    }
}

namespace {

// prefix = tokens[:-1], targets = tokens[1:], all positions weighted 1
NodePtr example_ce(const TrainExample& ex, Params& params, Rng* dropout_rng) {
    if (ex.tokens.size() < 2)
        throw std::invalid_argument("train example needs at least BOS,EOS");
    std::vector<int> prefix(ex.tokens.begin(), ex.tokens.end() - 1);
    std::vector<int> targets(ex.tokens.begin() + 1, ex.tokens.end());
    NodePtr memory = encode_mel(ex.mel, params, dropout_rng);
    NodePtr logits = decode_logits(memory, prefix, params, dropout_rng);
    std::vector<Real> weights(targets.size(), Real(1));
    return cross_entropy_logits(logits, targets, weights);
}

void require_finite(double loss, int64_t step, uint64_t batch_seed, const char* what) {
    if (!std::isfinite(loss))
        throw TrainingError(std::string(what) + " is not finite at step " +
                            std::to_string(step) + " (batch seed " +
                            std::to_string(batch_seed) + ")");
}

} // namespace

LossReport pretrain_step(std::span<const TrainExample> batch, Params& params, Adam& opt,
                         int64_t step, uint64_t batch_seed) {
    if (batch.empty()) throw std::invalid_argument("pretrain_step: empty batch");
    std::vector<NodePtr> losses;
    for (const TrainExample& ex : batch) losses.push_back(example_ce(ex, params, nullptr));
    NodePtr loss = mean_scalars(losses);
    require_finite(double(loss->scalar()), step, batch_seed, "transcription loss");

    params.zero_grad();
    backward(loss);
    opt.step(params.model_params());

    LossReport rep;
    rep.transcription_ce = double(loss->scalar());
    rep.step = step;
    rep.lambda = 0.0;
    return rep;
}

LossReport confusion_step(std::span<const TrainExample> synth,
                          std::span<const MelSegment> real, Params& params,
                          Adam& opt_model, Adam& opt_disc, FinetuneMode mode,
                          double lambda, Rng& rng, int64_t step, int disc_reps) {
    if (synth.empty() || real.empty())
        throw std::invalid_argument("confusion_step: both batches must be non-empty");
    if (disc_reps < 1) throw std::invalid_argument("confusion_step: disc_reps must be >= 1");
    const int max_start = params.cfg.frames - params.cfg.disc_window;

    LossReport rep;
    rep.lambda = lambda;
    rep.step = step;

    // Phase 1: discriminator on detached encoder outputs. The encoder is
    // frozen here, so each example is encoded once and reused across reps.
    {
        std::vector<Mat> synth_mem, real_mem;
        {
            NoGradGuard ng;
            for (const TrainExample& ex : synth) synth_mem.push_back(encode_mel(ex.mel, params)->val);
            for (const MelSegment& mel : real) real_mem.push_back(encode_mel(mel, params)->val);
        }
        for (int r = 0; r < disc_reps; ++r) {
            std::vector<NodePtr> terms;
            int correct = 0, total = 0;
            auto run_side = [&](const std::vector<Mat>& mems, Real target) {
                std::vector<NodePtr> side;
                for (const Mat& mem : mems) {
                    NodePtr win = discriminate(leaf(Mat(mem)),
                                               int(rng.uniform_int(0, max_start)), params);
                    double pv = double(win->scalar());
                    if ((pv >= 0.5) == (target >= Real(0.5))) correct++;
                    total++;
                    side.push_back(bce_loss(win, target));
                }
                terms.push_back(mean_scalars(side));
            };
            run_side(synth_mem, Real(0));
            run_side(real_mem, Real(1));
            NodePtr loss = add(terms[0], terms[1]);
            rep.disc_loss = double(loss->scalar());
            rep.disc_accuracy = total > 0 ? double(correct) / total : 0.0;
            require_finite(rep.disc_loss, step, 0, "discriminator loss");

            params.zero_grad();
            backward(loss);
            opt_disc.step(params.disc_params());
        }
    }

    // Phase 2: encoder + decoder on CE + lambda * adversarial term. Gradients
    // flow through the discriminator's weights into E, but C is not updated.
    {
        Real target = mode == FinetuneMode::confusion ? Real(0.5) : Real(1);
        std::vector<NodePtr> ce_terms, adv_s, adv_r;
        for (const TrainExample& ex : synth) {
            NodePtr memory = encode_mel(ex.mel, params);
            std::vector<int> prefix(ex.tokens.begin(), ex.tokens.end() - 1);
            std::vector<int> targets(ex.tokens.begin() + 1, ex.tokens.end());
            std::vector<Real> weights(targets.size(), Real(1));
            ce_terms.push_back(
                cross_entropy_logits(decode_logits(memory, prefix, params), targets, weights));
            adv_s.push_back(bce_loss(
                discriminate(memory, int(rng.uniform_int(0, max_start)), params), target));
        }
        for (const MelSegment& mel : real) {
            NodePtr memory = encode_mel(mel, params);
            adv_r.push_back(bce_loss(
                discriminate(memory, int(rng.uniform_int(0, max_start)), params), target));
        }
        NodePtr ce = mean_scalars(ce_terms);
        NodePtr adv = add(mean_scalars(adv_s), mean_scalars(adv_r));
        NodePtr loss = add_scaled(ce, adv, Real(lambda));
        rep.transcription_ce = double(ce->scalar());
        rep.adv_loss = double(adv->scalar());
        require_finite(double(loss->scalar()), step, 0, "fine-tuning loss");

        params.zero_grad();
        backward(loss);
        opt_model.step(params.model_params());
    }
    return rep;
}

std::vector<double> balanced_probabilities(const std::vector<size_t>& sizes) {
    if (sizes.empty()) throw std::invalid_argument("balanced_probabilities: no datasets");
    double total = 0;
    for (size_t n : sizes) {
        if (n == 0) throw std::invalid_argument("balanced_probabilities: empty dataset");
        total += double(n);
    }
    std::vector<double> p(sizes.size());
    double norm = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
        p[i] = std::pow(double(sizes[i]) / total, 0.3);
        norm += p[i];
    }
    // the paper's weights do not sum to 1; normalize for a valid categorical
    for (double& v : p) v /= norm;
    return p;
}

BalancedSampler::BalancedSampler(const std::vector<size_t>& sizes)
    : sizes_(sizes), probs_(balanced_probabilities(sizes)) {
    double acc = 0;
    for (double p : probs_) {
        acc += p;
        cdf_.push_back(acc);
    }
    cdf_.back() = 1.0;
}

std::pair<size_t, size_t> BalancedSampler::draw(Rng& rng) const {
    double u = rng.uniform(0.0, 1.0);
    size_t ds = size_t(std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    if (ds >= sizes_.size()) ds = sizes_.size() - 1;
    size_t ex = size_t(rng.uniform_int(0, int64_t(sizes_[ds]) - 1));
    return {ds, ex};
}

AudioBuffer realify(const AudioBuffer& in, uint64_t seed, const RealifyConfig& cfg) {
    Rng rng(seed);
    AudioBuffer out = in;

    // one-pole lowpass
    double a = 1.0 - std::exp(-2.0 * std::numbers::pi * cfg.lowpass_hz / in.sample_rate);
    double y = 0.0;
    for (float& s : out.samples) {
        y += a * (double(s) - y);
        s = float(y);
    }

    // feedback comb, a crude room
    size_t delay = size_t(cfg.comb_delay_s * in.sample_rate);
    if (delay > 0 && delay < out.samples.size())
        for (size_t i = delay; i < out.samples.size(); ++i)
            out.samples[i] += float(cfg.comb_gain) * out.samples[i - delay];

    float pk = peak(out);
    double sigma = cfg.noise_level * (pk > 0 ? pk : 1.0f);
    for (float& s : out.samples) s += float(rng.gaussian(0.0, sigma));

    peak_normalize(out);
    return out;
}

} // namespace synthamt::nn
