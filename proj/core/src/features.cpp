#include "synthamt/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace synthamt {

namespace features_detail {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void fft(std::vector<std::complex<double>>& x) {
    size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / double(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = x[i + k];
                auto v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

namespace {

struct MelBank {
    // per filter: first FFT bin and triangle weights
    std::vector<int> start;
    std::vector<std::vector<double>> weights;
    std::vector<double> centers_hz;
};

const MelBank& mel_bank() {
    static const MelBank bank = [] {
        MelBank b;
        const int n_fft_bins = kFftSize / 2 + 1;
        const double bin_hz = 16000.0 / kFftSize;
        const int n_mels = MelSegment::kBins;
        double mel_lo = hz_to_mel(kFmin), mel_hi = hz_to_mel(kFmax);
        std::vector<double> edges(n_mels + 2);
        for (int i = 0; i < n_mels + 2; ++i)
            edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / double(n_mels + 1));
        b.start.resize(n_mels);
        b.weights.resize(n_mels);
        b.centers_hz.assign(edges.begin() + 1, edges.end() - 1);
        for (int m = 0; m < n_mels; ++m) {
            double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
            int k0 = std::max(0, int(std::ceil(lo / bin_hz)));
            int k1 = std::min(n_fft_bins - 1, int(std::floor(hi / bin_hz)));
            b.start[m] = k0;
            for (int k = k0; k <= k1; ++k) {
                double f = k * bin_hz;
                double w = 0.0;
                if (f <= c && c > lo) w = (f - lo) / (c - lo);
                else if (f > c && hi > c) w = (hi - f) / (hi - c);
                b.weights[m].push_back(std::max(0.0, w));
            }
        }
        return b;
    }();
    return bank;
}

const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kFftSize);
        for (int i = 0; i < kFftSize; ++i)
            v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFftSize);
        return v;
    }();
    return w;
}

} // namespace

std::vector<double> filter_centers_hz() { return mel_bank().centers_hz; }

} // namespace features_detail

MelSegment melspec(const AudioBuffer& audio) {
    using namespace features_detail;
    if (audio.sample_rate != 16000)
        throw std::invalid_argument("melspec: expected 16 kHz audio");
    if (int(audio.samples.size()) != kSegmentSamples)
        throw std::invalid_argument("melspec: expected exactly 40960 samples, got " +
                                    std::to_string(audio.samples.size()));

    const int pad = kFftSize / 2;
    std::vector<double> padded(kSegmentSamples + 2 * pad);
    for (int i = 0; i < kSegmentSamples; ++i) padded[pad + i] = audio.samples[size_t(i)];
    for (int i = 0; i < pad; ++i) {
        padded[pad - 1 - i] = audio.samples[size_t(i + 1)];                       // reflect head
        padded[pad + kSegmentSamples + i] = audio.samples[size_t(kSegmentSamples - 2 - i)];
    }

    const auto& win = hann_window();
    const auto& bank = mel_bank();
    MelSegment mel;
    mel.data.assign(size_t(MelSegment::kFrames) * MelSegment::kBins, 0.0f);

    std::vector<std::complex<double>> buf(kFftSize);
    std::vector<double> mag(kFftSize / 2 + 1);
    // the centered STFT yields 257 frames; the last is dropped so 256 frames
    // tile the segment at 10 ms exactly
    for (int n = 0; n < MelSegment::kFrames; ++n) {
        const double* src = padded.data() + size_t(n) * kHop;
        for (int i = 0; i < kFftSize; ++i) buf[size_t(i)] = src[i] * win[size_t(i)];
        fft(buf);
        for (int k = 0; k <= kFftSize / 2; ++k) mag[size_t(k)] = std::abs(buf[size_t(k)]);
        for (int m = 0; m < MelSegment::kBins; ++m) {
            double e = 0.0;
            const auto& w = bank.weights[size_t(m)];
            int k0 = bank.start[size_t(m)];
            for (size_t j = 0; j < w.size(); ++j) e += w[j] * mag[size_t(k0) + j];
            mel.at(n, m) = float(std::log(std::max(e, 1e-5)));
        }
    }
    return mel;
}

void write_npy(const std::filesystem::path& path, const MelSegment& mel) {
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (256, 384), }";
    size_t total = 10 + header.size() + 1;
    size_t padded_len = (total + 63) / 64 * 64;
    header.append(padded_len - total, ' ');
    header.push_back('\n');

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    const char magic[] = "\x93NUMPY\x01\x00";
    f.write(magic, 8);
    uint16_t hlen = uint16_t(header.size());
    f.put(char(hlen & 0xff));
    f.put(char(hlen >> 8));
    f.write(header.data(), std::streamsize(header.size()));
    f.write(reinterpret_cast<const char*>(mel.data.data()),
            std::streamsize(mel.data.size() * 4));
}

} // namespace synthamt
