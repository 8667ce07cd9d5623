#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace synthamt {

struct AudioBuffer {
    std::vector<float> samples; // mono, nominally within [-1, 1]
    int sample_rate = 16000;

    double duration_s() const {
        return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
    }
};

float peak(const AudioBuffer& buf);

// Scales so max |sample| == 1; silence is left untouched.
void peak_normalize(AudioBuffer& buf);

// WAV, mono or stereo (averaged to mono), PCM16 or float32.
AudioBuffer wav_read(const std::filesystem::path& path);
AudioBuffer wav_decode(const std::vector<uint8_t>& bytes);

// float32 mono WAV
void wav_write(const std::filesystem::path& path, const AudioBuffer& buf);
std::vector<uint8_t> wav_encode(const AudioBuffer& buf);

// Windowed-sinc interpolation, out[n] = x(n * ratio). ratio > 1 shortens.
std::vector<float> resample_by_ratio(const std::vector<float>& in, double ratio);

AudioBuffer resample_to_rate(const AudioBuffer& in, int target_rate);

} // namespace synthamt
