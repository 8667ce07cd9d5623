#pragma once

#include "synthamt/audio.hpp"

#include <complex>
#include <filesystem>
#include <vector>

namespace synthamt {

// 2.56 s of 16 kHz audio as a 256-frame x 384-bin log-mel matrix.
struct MelSegment {
    static constexpr int kFrames = 256;
    static constexpr int kBins = 384;
    static constexpr double kHopS = 0.010;
    static constexpr float kLogFloor = -11.512925464970229f; // log(1e-5)

    std::vector<float> data; // row-major, frames x bins

    float at(int frame, int bin) const { return data[size_t(frame) * kBins + bin]; }
    float& at(int frame, int bin) { return data[size_t(frame) * kBins + bin]; }
};

// STFT: Hann 2048, hop 160, reflect-padded and centered; magnitude through a
// 384-filter HTK-mel triangular bank (0-8000 Hz), natural log, 1e-5 floor.
// Input must be exactly 40960 samples at 16 kHz.
MelSegment melspec(const AudioBuffer& audio);

// raw float32 dump, standard NPY v1 header, shape (256, 384), row-major
void write_npy(const std::filesystem::path& path, const MelSegment& mel);

namespace features_detail {
constexpr int kFftSize = 2048;
constexpr int kHop = 160;
constexpr int kSegmentSamples = 40960;
constexpr double kFmin = 0.0;
constexpr double kFmax = 8000.0;

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f/700)
double mel_to_hz(double mel);
// center frequency (Hz) of each of the 384 filters
std::vector<double> filter_centers_hz();
// in-place radix-2 DIT
void fft(std::vector<std::complex<double>>& x);
} // namespace features_detail

} // namespace synthamt
