#pragma once

#include "synthamt/audio.hpp"
#include "synthamt/model.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace synthamt::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // applies gradients of the given named parameters, then leaves grads as-is
    void step(const std::vector<std::pair<std::string, NodePtr>>& params);

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; } // moments are kept across changes

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, std::pair<Mat, Mat>> state_; // first/second moments
};

struct LossReport {
    double transcription_ce = 0.0;
    double disc_loss = 0.0;   // Eq. 1 value at this step
    double adv_loss = 0.0;    // unscaled adversarial BCE sum
    double disc_accuracy = 0.0;
    double lambda = 0.01;
    int64_t step = 0;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainExample {
    MelSegment mel;
    std::vector<int> tokens; // complete sequence, BOS..EOS
};

// Teacher-forced cross-entropy over the batch, one Adam update on the
// encoder + decoder parameters. Throws TrainingError on non-finite loss.
LossReport pretrain_step(std::span<const TrainExample> batch, Params& params, Adam& opt,
                         int64_t step, uint64_t batch_seed = 0);

enum class FinetuneMode { confusion, adaptation };

// Alternating objectives: phase 1 updates only the discriminator on
// detached encoder outputs (targets 0 synthetic / 1 real); phase 2 updates
// encoder + decoder on CE + lambda * adversarial BCE with target 0.5
// (confusion) or 1.0 (adaptation). One random window per example.
// disc_reps sets the alternation ratio (phase-1 updates per phase-2 update);
// each repetition draws fresh windows. Draw order: phase-1 windows rep by
// rep (synth then real), then phase-2 windows (synth then real).
// The report carries the last phase-1 repetition's discriminator numbers.
LossReport confusion_step(std::span<const TrainExample> synth,
                          std::span<const MelSegment> real, Params& params,
                          Adam& opt_model, Adam& opt_disc, FinetuneMode mode,
                          double lambda, Rng& rng, int64_t step, int disc_reps = 1);

// normalized (n_i / sum n)^0.3
std::vector<double> balanced_probabilities(const std::vector<size_t>& sizes);

class BalancedSampler {
public:
    explicit BalancedSampler(const std::vector<size_t>& sizes);
    // dataset index, then a uniform example index within it
    std::pair<size_t, size_t> draw(Rng& rng) const;
    const std::vector<double>& probabilities() const { return probs_; }

private:
    std::vector<size_t> sizes_;
    std::vector<double> probs_;
    std::vector<double> cdf_;
};

// Deterministic "real domain" corruption chain: one-pole lowpass, comb
// smearing, additive noise, renormalize. Builds a domain gap from held-out
// synthetic audio without external datasets.
struct RealifyConfig {
    double lowpass_hz = 2500.0;
    double comb_delay_s = 0.023;
    double comb_gain = 0.4;
    double noise_level = 0.01; // relative to peak
};

AudioBuffer realify(const AudioBuffer& in, uint64_t seed,
                    const RealifyConfig& cfg = RealifyConfig{});

} // namespace synthamt::nn
