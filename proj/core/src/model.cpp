#include "synthamt/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace synthamt::nn {

std::string config_to_json(const ModelConfig& c) {
    nlohmann::json j{
        {"embed", c.embed}, {"ff", c.ff}, {"heads", c.heads},
        {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
        {"n_mel", c.n_mel}, {"vocab", c.vocab}, {"frames", c.frames},
        {"max_len", c.max_len}, {"disc_window", c.disc_window},
        {"disc_hidden", c.disc_hidden}, {"dropout", c.dropout},
        {"disc_leak", c.disc_leak}};
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.embed = j.at("embed");
    c.ff = j.at("ff");
    c.heads = j.at("heads");
    c.enc_layers = j.at("enc_layers");
    c.dec_layers = j.at("dec_layers");
    c.n_mel = j.at("n_mel");
    c.vocab = j.at("vocab");
    c.frames = j.at("frames");
    c.max_len = j.at("max_len");
    c.disc_window = j.at("disc_window");
    c.disc_hidden = j.at("disc_hidden");
    c.dropout = j.at("dropout");
    c.disc_leak = j.at("disc_leak");
    return c;
}

size_t param_count(const ModelConfig& c) {
    size_t E = size_t(c.embed), F = size_t(c.ff), V = size_t(c.vocab);
    size_t attn = 4 * (E * E + E);              // q,k,v,o projections + biases
    size_t ff = E * F + F + F * E + E;
    size_t ln = 2 * E;
    size_t enc = size_t(c.enc_layers) * (attn + ff + 2 * ln) + ln; // + final LN
    size_t dec = size_t(c.dec_layers) * (2 * attn + ff + 3 * ln) + ln;
    size_t in_proj = size_t(c.n_mel) * E + E;
    size_t tok = V * E;
    size_t head = E * V + V;
    size_t H = size_t(c.disc_hidden), W = size_t(c.disc_window) * E;
    size_t disc = W * H + H + H * H + H + H + 1;
    return enc + dec + in_proj + tok + head + disc;
}

NodePtr Params::get(const std::string& name) const {
    for (const auto& [n, p] : named)
        if (n == name) return p;
    throw std::invalid_argument("unknown parameter: " + name);
}

std::vector<std::pair<std::string, NodePtr>> Params::scope(const std::string& prefix) const {
    std::vector<std::pair<std::string, NodePtr>> out;
    for (const auto& [n, p] : named)
        if (n.rfind(prefix, 0) == 0) out.emplace_back(n, p);
    return out;
}

std::vector<std::pair<std::string, NodePtr>> Params::model_params() const {
    std::vector<std::pair<std::string, NodePtr>> out;
    for (const auto& [n, p] : named)
        if (n.rfind("disc.", 0) != 0) out.emplace_back(n, p);
    return out;
}

std::vector<std::pair<std::string, NodePtr>> Params::disc_params() const {
    return scope("disc.");
}

void Params::zero_grad() const {
    for (const auto& [n, p] : named) {
        p->ensure_grad();
        std::fill(p->grad.d.begin(), p->grad.d.end(), Real(0));
    }
}

namespace {

Mat sinusoidal_posenc(int positions, int dim) {
    Mat pe(positions, dim);
    for (int pos = 0; pos < positions; ++pos)
        for (int i = 0; i < dim; ++i) {
            double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / double(dim));
            pe(pos, i) = Real(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

NodePtr xavier(int rows, int cols, Rng& rng) {
    Mat m(rows, cols);
    double bound = std::sqrt(6.0 / double(rows + cols));
    for (auto& v : m.d) v = Real(rng.uniform(-bound, bound));
    return leaf(std::move(m), true);
}

NodePtr zeros(int rows, int cols) { return leaf(Mat(rows, cols), true); }
NodePtr ones_row(int cols) {
    Mat m(1, cols);
    std::fill(m.d.begin(), m.d.end(), Real(1));
    return leaf(std::move(m), true);
}

struct Builder {
    Params& p;
    Rng& rng;
    void affine(const std::string& base, int in, int out) {
        p.named.emplace_back(base + ".w", xavier(in, out, rng));
        p.named.emplace_back(base + ".b", zeros(1, out));
    }
    void lnorm(const std::string& base, int dim) {
        p.named.emplace_back(base + ".g", ones_row(dim));
        p.named.emplace_back(base + ".b", zeros(1, dim));
    }
    void attention(const std::string& base, int dim) {
        affine(base + ".q", dim, dim);
        affine(base + ".k", dim, dim);
        affine(base + ".v", dim, dim);
        affine(base + ".o", dim, dim);
    }
};

NodePtr affine_fwd(const NodePtr& x, const Params& p, const std::string& base) {
    return add_rowvec(matmul(x, p.get(base + ".w")), p.get(base + ".b"));
}

NodePtr ln_fwd(const NodePtr& x, const Params& p, const std::string& base) {
    return layer_norm(x, p.get(base + ".g"), p.get(base + ".b"));
}

NodePtr mha(const NodePtr& q_src, const NodePtr& kv_src, const Params& p,
            const std::string& base, bool causal) {
    int E = p.cfg.embed, H = p.cfg.heads, dh = E / H;
    NodePtr Q = affine_fwd(q_src, p, base + ".q");
    NodePtr K = affine_fwd(kv_src, p, base + ".k");
    NodePtr V = affine_fwd(kv_src, p, base + ".v");
    std::vector<NodePtr> heads;
    Real inv_sqrt = Real(1.0 / std::sqrt(double(dh)));
    for (int h = 0; h < H; ++h) {
        NodePtr Qh = slice_cols(Q, h * dh, (h + 1) * dh);
        NodePtr Kh = slice_cols(K, h * dh, (h + 1) * dh);
        NodePtr Vh = slice_cols(V, h * dh, (h + 1) * dh);
        NodePtr scores = scale(matmul(Qh, transpose(Kh)), inv_sqrt);
        NodePtr attn = softmax_rows(scores, causal);
        heads.push_back(matmul(attn, Vh));
    }
    return affine_fwd(concat_cols(heads), p, base + ".o");
}

NodePtr ff_block(const NodePtr& x, const Params& p, const std::string& base) {
    return affine_fwd(gelu(affine_fwd(x, p, base + ".1")), p, base + ".2");
}

NodePtr maybe_dropout(const NodePtr& x, const Params& p, Rng* rng) {
    if (rng && p.cfg.dropout > 0.0) return dropout(x, p.cfg.dropout, *rng);
    return x;
}

} // namespace

Params init_params(const ModelConfig& cfg, Rng& rng) {
    if (cfg.embed % cfg.heads != 0)
        throw std::invalid_argument("init_params: embed must be divisible by heads");
    Params p;
    p.cfg = cfg;
    Builder b{p, rng};

    b.affine("in_proj", cfg.n_mel, cfg.embed);
    for (int l = 0; l < cfg.enc_layers; ++l) {
        std::string base = "enc." + std::to_string(l);
        b.lnorm(base + ".ln1", cfg.embed);
        b.attention(base + ".attn", cfg.embed);
        b.lnorm(base + ".ln2", cfg.embed);
        b.affine(base + ".ff.1", cfg.embed, cfg.ff);
        b.affine(base + ".ff.2", cfg.ff, cfg.embed);
    }
    b.lnorm("enc.final_ln", cfg.embed);

    p.named.emplace_back("tok_emb", xavier(cfg.vocab, cfg.embed, rng));
    for (int l = 0; l < cfg.dec_layers; ++l) {
        std::string base = "dec." + std::to_string(l);
        b.lnorm(base + ".ln1", cfg.embed);
        b.attention(base + ".self", cfg.embed);
        b.lnorm(base + ".ln2", cfg.embed);
        b.attention(base + ".cross", cfg.embed);
        b.lnorm(base + ".ln3", cfg.embed);
        b.affine(base + ".ff.1", cfg.embed, cfg.ff);
        b.affine(base + ".ff.2", cfg.ff, cfg.embed);
    }
    b.lnorm("dec.final_ln", cfg.embed);
    b.affine("out", cfg.embed, cfg.vocab);

    b.affine("disc.1", cfg.disc_window * cfg.embed, cfg.disc_hidden);
    b.affine("disc.2", cfg.disc_hidden, cfg.disc_hidden);
    b.affine("disc.3", cfg.disc_hidden, 1);

    p.posenc = sinusoidal_posenc(std::max(cfg.frames, cfg.max_len), cfg.embed);
    return p;
}

NodePtr encode_frames(Mat input, const Params& p, Rng* dropout_rng) {
    const ModelConfig& c = p.cfg;
    if (input.rows != c.frames || input.cols != c.n_mel)
        throw std::invalid_argument("encode_frames: expected " + std::to_string(c.frames) +
                                    " x " + std::to_string(c.n_mel) + " input");

    Mat pos(c.frames, c.embed);
    for (int i = 0; i < c.frames; ++i)
        for (int j = 0; j < c.embed; ++j) pos(i, j) = p.posenc(i, j);

    NodePtr x = add(affine_fwd(constant(std::move(input)), p, "in_proj"),
                    constant(std::move(pos)));
    x = maybe_dropout(x, p, dropout_rng);
    for (int l = 0; l < c.enc_layers; ++l) {
        std::string base = "enc." + std::to_string(l);
        x = add(x, maybe_dropout(mha(ln_fwd(x, p, base + ".ln1"),
                                     ln_fwd(x, p, base + ".ln1"), p, base + ".attn", false),
                                 p, dropout_rng));
        x = add(x, maybe_dropout(ff_block(ln_fwd(x, p, base + ".ln2"), p, base + ".ff"),
                                 p, dropout_rng));
    }
    return ln_fwd(x, p, "enc.final_ln");
}

NodePtr encode_mel(const MelSegment& mel, const Params& p, Rng* dropout_rng) {
    if (p.cfg.frames != MelSegment::kFrames || p.cfg.n_mel != MelSegment::kBins)
        throw std::invalid_argument("encode_mel: config does not match the mel front-end");
    Mat input(MelSegment::kFrames, MelSegment::kBins);
    for (size_t i = 0; i < input.size(); ++i) input.d[i] = Real(mel.data[i]);
    return encode_frames(std::move(input), p, dropout_rng);
}

NodePtr decode_logits(const NodePtr& memory, const std::vector<int>& prefix,
                      const Params& p, Rng* dropout_rng) {
    const ModelConfig& c = p.cfg;
    if (prefix.empty() || int(prefix.size()) > c.max_len)
        throw std::invalid_argument("decode_logits: prefix length must be in [1, max_len]");

    Mat pos(int(prefix.size()), c.embed);
    for (int i = 0; i < pos.rows; ++i)
        for (int j = 0; j < c.embed; ++j) pos(i, j) = p.posenc(i, j);

    NodePtr x = add(embed_rows(prefix, p.get("tok_emb")), constant(std::move(pos)));
    x = maybe_dropout(x, p, dropout_rng);
    for (int l = 0; l < c.dec_layers; ++l) {
        std::string base = "dec." + std::to_string(l);
        NodePtr q = ln_fwd(x, p, base + ".ln1");
        x = add(x, maybe_dropout(mha(q, q, p, base + ".self", true), p, dropout_rng));
        x = add(x, maybe_dropout(mha(ln_fwd(x, p, base + ".ln2"), memory, p, base + ".cross",
                                     false),
                                 p, dropout_rng));
        x = add(x, maybe_dropout(ff_block(ln_fwd(x, p, base + ".ln3"), p, base + ".ff"),
                                 p, dropout_rng));
    }
    return affine_fwd(ln_fwd(x, p, "dec.final_ln"), p, "out");
}

NodePtr discriminate(const NodePtr& memory, int window_start, const Params& p) {
    const ModelConfig& c = p.cfg;
    if (window_start < 0 || window_start + c.disc_window > memory->val.rows)
        throw std::invalid_argument("discriminate: window outside encoder output");
    NodePtr x = reshape(slice_rows(memory, window_start, window_start + c.disc_window),
                        1, c.disc_window * c.embed);
    x = leaky_relu(affine_fwd(x, p, "disc.1"), Real(c.disc_leak));
    x = leaky_relu(affine_fwd(x, p, "disc.2"), Real(c.disc_leak));
    return sigmoid(affine_fwd(x, p, "disc.3"));
}

TokenSeq greedy_transcribe(const MelSegment& mel, const Params& p) {
    NoGradGuard ng;
    NodePtr memory = encode_mel(mel, p);
    TokenSeq seq;
    seq.ids.push_back(vocab::BOS);
    while (int(seq.ids.size()) < p.cfg.max_len) {
        NodePtr logits = decode_logits(memory, seq.ids, p);
        int last = logits->val.rows - 1;
        int best = 0;
        for (int j = 1; j < logits->val.cols; ++j)
            if (logits->val(last, j) > logits->val(last, best)) best = j;
        seq.ids.push_back(best);
        if (best == vocab::EOS) break;
    }
    return seq;
}

namespace {
constexpr char kMagic[4] = {'S', 'A', 'M', 'T'};
constexpr uint32_t kVersion = 1;
} // namespace

void save_checkpoint(const std::filesystem::path& path, const Params& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
    auto wr_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    f.write(kMagic, 4);
    wr_u32(kVersion);
    std::string cfg = config_to_json(params.cfg);
    wr_u32(uint32_t(cfg.size()));
    f.write(cfg.data(), std::streamsize(cfg.size()));
    wr_u32(uint32_t(params.named.size()));
    for (const auto& [name, node] : params.named) {
        wr_u32(uint32_t(name.size()));
        f.write(name.data(), std::streamsize(name.size()));
        wr_u32(uint32_t(node->val.rows));
        wr_u32(uint32_t(node->val.cols));
        for (Real v : node->val.d) {
            float x = float(v);
            f.write(reinterpret_cast<const char*>(&x), 4);
        }
    }
}

Params load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
    auto rd_u32 = [&]() {
        uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (!f) throw std::runtime_error("checkpoint: truncated file " + path.string());
        return v;
    };
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    uint32_t version = rd_u32();
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint32_t cfg_len = rd_u32();
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);
    ModelConfig cfg = config_from_json(cfg_text);

    Rng dummy(0);
    Params p = init_params(cfg, dummy);
    uint32_t n = rd_u32();
    if (n != p.named.size())
        throw std::runtime_error("checkpoint: tensor count mismatch");
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t name_len = rd_u32();
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        uint32_t rows = rd_u32(), cols = rd_u32();
        NodePtr node = p.get(name);
        if (node->val.rows != int(rows) || node->val.cols != int(cols))
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        for (auto& v : node->val.d) {
            float x;
            f.read(reinterpret_cast<char*>(&x), 4);
            v = Real(x);
        }
        if (!f) throw std::runtime_error("checkpoint: truncated tensor " + name);
    }
    return p;
}

} // namespace synthamt::nn
