#ifndef NNPM_DSP_HPP
#define NNPM_DSP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nnpm/wav.hpp"

namespace nnpm {

// Front-end parameters. Defaults give 747 frames of 40 log-mel bins per
// utterance after duration unification.
struct DspConfig {
    int sample_rate_hz = 16000;
    double target_seconds = 7.5;
    size_t window_len = 400;  // Hanning window length
    size_t fft_len = 512;     // must be a power of two and >= window_len
    size_t hop = 160;
    size_t mel_bins = 40;
    double fmin_hz = 0.0;
    double fmax_hz = 8000.0;
    double log_floor = 1e-10;  // power floor before the log

    size_t target_samples() const;
    size_t spectrum_bins() const { return fft_len / 2 + 1; }
    // floor((N - fft_len) / hop) + 1 for the unified length N
    size_t frames_for(size_t num_samples) const;
    void validate() const;
    std::string to_json() const;
};

// Time-major matrix of log-mel energies: frames x mel_bins.
struct Spectrogram {
    size_t frames = 0;
    size_t mel_bins = 0;
    std::vector<double> values;  // row-major, frames * mel_bins

    double& at(size_t t, size_t m) { return values[t * mel_bins + m]; }
    double at(size_t t, size_t m) const { return values[t * mel_bins + m]; }
};

// Complex STFT output; bins = fft_len/2 + 1.
struct ComplexFrames {
    size_t frames = 0;
    size_t bins = 0;
    std::vector<double> re;
    std::vector<double> im;
};

// Triangular mel filterbank on the HTK mel scale. Centers are equally
// spaced in mel; weights are evaluated at the exact FFT bin frequencies.
struct MelFilterbank {
    size_t mel_bins = 0;
    size_t spectrum_bins = 0;
    std::vector<double> weights;  // mel_bins x spectrum_bins
    std::vector<double> center_freqs_hz;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
MelFilterbank build_mel_filterbank(const DspConfig& config);

// Symmetric Hanning window: w[i] = 0.5*(1 - cos(2*pi*i/(n-1))), so
// w[i] == w[n-1-i].
std::vector<double> hanning_window(size_t n);

// Pads with trailing zeros or keeps the leading samples so the output is
// exactly target_seconds long.
Waveform unify_duration(const Waveform& w, double target_seconds = 7.5);

ComplexFrames stft(const Waveform& w, const DspConfig& config);

// Full front-end: unify -> window -> FFT -> power -> mel -> log floor.
Spectrogram mel_spectrogram(const Waveform& w, const DspConfig& config);

// Per-mel-bin standardization statistics. Computed once on the source-domain
// training split and reused everywhere else.
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at 1e-8 when computed
};

FeatureStats compute_feature_stats(const std::vector<const Spectrogram*>& specs);
Spectrogram normalize_features(const Spectrogram& s, const FeatureStats& stats);

// Binary feature container ("NNPMFEAT"), one file per utterance, with a JSON
// sidecar recording the extraction configuration.
void save_features(const std::string& path, const Spectrogram& s, const DspConfig& config);
Spectrogram load_features(const std::string& path);

}  // namespace nnpm

#endif
