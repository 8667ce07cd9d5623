#include "synthamt/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace synthamt {

float peak(const AudioBuffer& buf) {
    float p = 0.0f;
    for (float s : buf.samples) p = std::max(p, std::fabs(s));
    return p;
}

void peak_normalize(AudioBuffer& buf) {
    float p = peak(buf);
    if (p <= 0.0f) return;
    float g = 1.0f / p;
    for (float& s : buf.samples) s *= g;
}

namespace {

uint32_t rd_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x)); v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x >> 16)); v.push_back(uint8_t(x >> 24));
}
void wr_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(uint8_t(x)); v.push_back(uint8_t(x >> 8));
}
void wr_tag(std::vector<uint8_t>& v, const char* t) { v.insert(v.end(), t, t + 4); }

} // namespace

AudioBuffer wav_decode(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav: not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint8_t* hdr = bytes.data() + pos;
        uint32_t len = rd_u32(hdr + 4);
        const uint8_t* body = hdr + 8;
        if (pos + 8 + len > bytes.size())
            throw std::runtime_error("wav: truncated chunk at byte " + std::to_string(pos));
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (len < 16) throw std::runtime_error("wav: short fmt chunk");
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1); // chunks are word-aligned
    }
    if (!data) throw std::runtime_error("wav: missing data chunk");
    if (channels == 0 || channels > 2)
        throw std::runtime_error("wav: unsupported channel count " + std::to_string(channels));

    AudioBuffer out;
    out.sample_rate = int(rate);
    size_t bytes_per = bits / 8;
    if (bytes_per == 0) throw std::runtime_error("wav: bad bits per sample");
    size_t frames = data_len / (bytes_per * channels);
    out.samples.resize(frames);

    if (format == 1 && bits == 16) {
        for (size_t i = 0; i < frames; ++i) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) {
                int16_t s = int16_t(rd_u16(data + (i * channels + c) * 2));
                acc += s / 32768.0;
            }
            out.samples[i] = float(acc / channels);
        }
    } else if (format == 3 && bits == 32) {
        for (size_t i = 0; i < frames; ++i) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) {
                uint32_t u = rd_u32(data + (i * channels + c) * 4);
                float f;
                std::memcpy(&f, &u, 4);
                acc += f;
            }
            out.samples[i] = float(acc / channels);
        }
    } else {
        throw std::runtime_error("wav: unsupported format tag " + std::to_string(format) +
                                 " / " + std::to_string(bits) + " bit");
    }
    return out;
}

AudioBuffer wav_read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return wav_decode(bytes);
}

std::vector<uint8_t> wav_encode(const AudioBuffer& buf) {
    std::vector<uint8_t> v;
    uint32_t data_len = uint32_t(buf.samples.size() * 4);
    wr_tag(v, "RIFF");
    wr_u32(v, 4 + (8 + 16) + (8 + 4) + (8 + data_len));
    wr_tag(v, "WAVE");
    wr_tag(v, "fmt ");
    wr_u32(v, 16);
    wr_u16(v, 3); // IEEE float
    wr_u16(v, 1);
    wr_u32(v, uint32_t(buf.sample_rate));
    wr_u32(v, uint32_t(buf.sample_rate) * 4);
    wr_u16(v, 4);
    wr_u16(v, 32);
    wr_tag(v, "fact");
    wr_u32(v, 4);
    wr_u32(v, uint32_t(buf.samples.size()));
    wr_tag(v, "data");
    wr_u32(v, data_len);
    for (float s : buf.samples) {
        uint32_t u;
        std::memcpy(&u, &s, 4);
        wr_u32(v, u);
    }
    return v;
}

void wav_write(const std::filesystem::path& path, const AudioBuffer& buf) {
    auto v = wav_encode(buf);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size()));
}

std::vector<float> resample_by_ratio(const std::vector<float>& in, double ratio) {
    if (ratio <= 0.0) throw std::invalid_argument("resample: ratio must be positive");
    if (in.empty()) return {};
    if (ratio == 1.0) return in;

    // Anti-alias cutoff relative to input Nyquist; widen the kernel when the
    // cutoff drops so the transition band stays proportional.
    double cutoff = std::min(1.0, 1.0 / ratio) * 0.975;
    int half = int(std::ceil(32.0 / cutoff));

    size_t out_len = size_t(std::floor(double(in.size()) / ratio));
    if (out_len == 0) out_len = 1;
    std::vector<float> out(out_len);

    auto sinc = [](double x) {
        if (std::fabs(x) < 1e-12) return 1.0;
        double px = std::numbers::pi * x;
        return std::sin(px) / px;
    };

    for (size_t n = 0; n < out_len; ++n) {
        double t = double(n) * ratio;
        int k0 = int(std::floor(t)) - half + 1;
        int k1 = int(std::floor(t)) + half;
        double acc = 0.0;
        for (int k = std::max(k0, 0); k <= std::min(k1, int(in.size()) - 1); ++k) {
            double d = t - double(k);
            double w = 0.5 * (1.0 + std::cos(std::numbers::pi * d / double(half)));
            acc += double(in[size_t(k)]) * cutoff * sinc(cutoff * d) * w;
        }
        out[n] = float(acc);
    }
    return out;
}

AudioBuffer resample_to_rate(const AudioBuffer& in, int target_rate) {
    if (in.sample_rate == target_rate) return in;
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples = resample_by_ratio(in.samples, double(in.sample_rate) / target_rate);
    return out;
}

} // namespace synthamt
