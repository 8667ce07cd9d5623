#pragma once

#include "synthamt/features.hpp"
#include "synthamt/tensor.hpp"
#include "synthamt/token_codec.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace synthamt::nn {

struct ModelConfig {
    int embed = 384;
    int ff = 1024;
    int heads = 6;
    int enc_layers = 2;
    int dec_layers = 3;
    int n_mel = 384;
    int vocab = 389;
    int frames = 256;
    int max_len = 512;
    int disc_window = 10;  // encoder frames per discriminator input
    int disc_hidden = 512;
    double dropout = 0.0;
    double disc_leak = 0.1; // leaky-ReLU slope

    bool operator==(const ModelConfig&) const = default;
};

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

// trainable tensor count as a closed form of the config
size_t param_count(const ModelConfig& cfg);

// Named parameters plus the fixed sinusoidal positional table. Name prefixes
// define the optimization scopes: "enc."/"in_proj." belong to the encoder E,
// "dec."/"tok_emb."/"out." to the decoder D, "disc." to the discriminator C.
struct Params {
    ModelConfig cfg;
    std::vector<std::pair<std::string, NodePtr>> named;
    Mat posenc; // max(frames, max_len) x embed, constant

    NodePtr get(const std::string& name) const;
    std::vector<std::pair<std::string, NodePtr>> scope(const std::string& prefixes) const;
    // "model" = encoder + decoder (Eq. 2 scope), "disc" = discriminator
    std::vector<std::pair<std::string, NodePtr>> model_params() const;
    std::vector<std::pair<std::string, NodePtr>> disc_params() const;
    void zero_grad() const;
};

Params init_params(const ModelConfig& cfg, Rng& rng); // Xavier-uniform

// frames x n_mel input -> memory (frames x embed): per-frame projection +
// sinusoidal position, then pre-norm self-attention blocks, final LayerNorm
NodePtr encode_frames(Mat input, const Params& params, Rng* dropout_rng = nullptr);

// melspec front-end convenience; requires cfg.frames == 256, cfg.n_mel == 384
NodePtr encode_mel(const MelSegment& mel, const Params& params, Rng* dropout_rng = nullptr);

// teacher-forced prefix (starting with BOS) -> logits (len x vocab)
NodePtr decode_logits(const NodePtr& memory, const std::vector<int>& prefix,
                      const Params& params, Rng* dropout_rng = nullptr);

// probability that a 10-frame window of encoder output is real-domain audio
NodePtr discriminate(const NodePtr& memory, int window_start, const Params& params);

// greedy argmax from BOS until EOS or max_len; deterministic
TokenSeq greedy_transcribe(const MelSegment& mel, const Params& params);

// versioned binary container: magic, config JSON, named float32 tensors
void save_checkpoint(const std::filesystem::path& path, const Params& params);
Params load_checkpoint(const std::filesystem::path& path);

} // namespace synthamt::nn
