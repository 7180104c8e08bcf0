#ifndef NNPM_WAV_HPP
#define NNPM_WAV_HPP

#include <string>
#include <vector>

namespace nnpm {

// Mono waveform at the fixed 16 kHz ingestion rate. Samples live in [-1, 1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate_hz = 16000;
};

// Reads a 16-bit PCM mono RIFF/WAVE file at 16 kHz. Anything else
// (other encodings, channel counts, rates) is rejected with an InputError
// naming the offending property.
Waveform read_wav(const std::string& path);

// Writes 16-bit PCM mono; samples are clamped to [-1, 1] before quantization.
void write_wav(const std::string& path, const Waveform& w);

}  // namespace nnpm

#endif
