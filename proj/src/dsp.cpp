#include "nnpm/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nnpm/errors.hpp"

namespace nnpm {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT over interleaved-free split arrays.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    const size_t n = re.size();
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace

size_t DspConfig::target_samples() const {
    return static_cast<size_t>(std::llround(target_seconds * sample_rate_hz));
}

size_t DspConfig::frames_for(size_t num_samples) const {
    if (num_samples < fft_len) return 0;
    return (num_samples - fft_len) / hop + 1;
}

void DspConfig::validate() const {
    if (sample_rate_hz != 16000) throw ConfigError("dsp: sample rate is fixed at 16000 Hz");
    if (mel_bins < 1) throw ConfigError("dsp: mel_bins must be >= 1");
    if (!is_power_of_two(fft_len)) throw ConfigError("dsp: fft_len must be a power of two");
    if (window_len == 0 || window_len > fft_len)
        throw ConfigError("dsp: window_len must be in [1, fft_len]");
    if (hop == 0) throw ConfigError("dsp: hop must be >= 1");
    if (target_seconds <= 0.0) throw ConfigError("dsp: target_seconds must be positive");
    if (fmax_hz <= fmin_hz) throw ConfigError("dsp: fmax must exceed fmin");
    if (fmax_hz > sample_rate_hz / 2.0) throw ConfigError("dsp: fmax exceeds Nyquist");
    if (log_floor <= 0.0) throw ConfigError("dsp: log_floor must be positive");
}

std::string DspConfig::to_json() const {
    nlohmann::json j;
    j["sample_rate_hz"] = sample_rate_hz;
    j["target_seconds"] = target_seconds;
    j["window"] = "hanning_symmetric";
    j["window_len"] = window_len;
    j["fft_len"] = fft_len;
    j["hop"] = hop;
    j["mel_bins"] = mel_bins;
    j["mel_scale"] = "htk";
    j["spectrum"] = "power";
    j["fmin_hz"] = fmin_hz;
    j["fmax_hz"] = fmax_hz;
    j["log_floor"] = log_floor;
    return j.dump(2);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank build_mel_filterbank(const DspConfig& config) {
    config.validate();
    const size_t bins = config.spectrum_bins();
    const size_t m = config.mel_bins;
    MelFilterbank fb;
    fb.mel_bins = m;
    fb.spectrum_bins = bins;
    fb.weights.assign(m * bins, 0.0);
    fb.center_freqs_hz.resize(m);

    const double mel_lo = hz_to_mel(config.fmin_hz);
    const double mel_hi = hz_to_mel(config.fmax_hz);
    std::vector<double> edges(m + 2);
    for (size_t i = 0; i < m + 2; ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(m + 1));
    for (size_t i = 0; i < m; ++i) fb.center_freqs_hz[i] = edges[i + 1];

    const double hz_per_bin =
        static_cast<double>(config.sample_rate_hz) / static_cast<double>(config.fft_len);
    for (size_t f = 0; f < m; ++f) {
        const double left = edges[f], center = edges[f + 1], right = edges[f + 2];
        for (size_t k = 0; k < bins; ++k) {
            const double hz = hz_per_bin * static_cast<double>(k);
            double w = 0.0;
            if (hz > left && hz < center)
                w = (hz - left) / (center - left);
            else if (hz == center)
                w = 1.0;
            else if (hz > center && hz < right)
                w = (right - hz) / (right - center);
            fb.weights[f * bins + k] = w;
        }
    }
    return fb;
}

std::vector<double> hanning_window(size_t n) {
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                     static_cast<double>(n - 1)));
    return w;
}

Waveform unify_duration(const Waveform& w, double target_seconds) {
    if (w.samples.empty()) throw InputError("unify_duration: empty waveform");
    const size_t target =
        static_cast<size_t>(std::llround(target_seconds * w.sample_rate_hz));
    Waveform out;
    out.sample_rate_hz = w.sample_rate_hz;
    out.samples.assign(target, 0.0);
    const size_t keep = std::min(target, w.samples.size());
    std::copy(w.samples.begin(), w.samples.begin() + keep, out.samples.begin());
    return out;
}

ComplexFrames stft(const Waveform& w, const DspConfig& config) {
    config.validate();
    if (w.samples.size() < config.fft_len)
        throw InputError("stft: waveform shorter than fft_len (" +
                         std::to_string(w.samples.size()) + " < " +
                         std::to_string(config.fft_len) + " samples)");
    const size_t frames = config.frames_for(w.samples.size());
    const size_t bins = config.spectrum_bins();
    const auto window = hanning_window(config.window_len);

    ComplexFrames out;
    out.frames = frames;
    out.bins = bins;
    out.re.assign(frames * bins, 0.0);
    out.im.assign(frames * bins, 0.0);

    std::vector<double> re(config.fft_len), im(config.fft_len);
    for (size_t f = 0; f < frames; ++f) {
        const size_t start = f * config.hop;
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        for (size_t i = 0; i < config.window_len; ++i)
            re[i] = w.samples[start + i] * window[i];
        fft_radix2(re, im);
        for (size_t k = 0; k < bins; ++k) {
            out.re[f * bins + k] = re[k];
            out.im[f * bins + k] = im[k];
        }
    }
    return out;
}

Spectrogram mel_spectrogram(const Waveform& w, const DspConfig& config) {
    config.validate();
    const Waveform unified = unify_duration(w, config.target_seconds);
    const ComplexFrames frames = stft(unified, config);
    const MelFilterbank fb = build_mel_filterbank(config);

    Spectrogram s;
    s.frames = frames.frames;
    s.mel_bins = config.mel_bins;
    s.values.assign(s.frames * s.mel_bins, 0.0);

    std::vector<double> power(frames.bins);
    for (size_t f = 0; f < frames.frames; ++f) {
        for (size_t k = 0; k < frames.bins; ++k) {
            const double re = frames.re[f * frames.bins + k];
            const double im = frames.im[f * frames.bins + k];
            power[k] = re * re + im * im;
        }
        for (size_t m = 0; m < s.mel_bins; ++m) {
            const double* wrow = fb.weights.data() + m * frames.bins;
            double acc = 0.0;
            for (size_t k = 0; k < frames.bins; ++k) acc += wrow[k] * power[k];
            s.values[f * s.mel_bins + m] = std::log(std::max(acc, config.log_floor));
        }
    }
    return s;
}

FeatureStats compute_feature_stats(const std::vector<const Spectrogram*>& specs) {
    if (specs.empty()) throw InputError("compute_feature_stats: no spectrograms");
    const size_t bins = specs[0]->mel_bins;
    size_t count = 0;
    std::vector<double> sum(bins, 0.0), sumsq(bins, 0.0);
    for (const Spectrogram* s : specs) {
        if (s->mel_bins != bins)
            throw DimensionError("compute_feature_stats: inconsistent mel_bins");
        for (size_t t = 0; t < s->frames; ++t)
            for (size_t m = 0; m < bins; ++m) {
                const double v = s->at(t, m);
                sum[m] += v;
                sumsq[m] += v * v;
            }
        count += s->frames;
    }
    FeatureStats stats;
    stats.mean.resize(bins);
    stats.stddev.resize(bins);
    for (size_t m = 0; m < bins; ++m) {
        stats.mean[m] = sum[m] / static_cast<double>(count);
        const double var =
            std::max(0.0, sumsq[m] / static_cast<double>(count) - stats.mean[m] * stats.mean[m]);
        stats.stddev[m] = std::max(std::sqrt(var), 1e-8);
    }
    return stats;
}

Spectrogram normalize_features(const Spectrogram& s, const FeatureStats& stats) {
    if (stats.mean.size() != s.mel_bins || stats.stddev.size() != s.mel_bins)
        throw DimensionError("normalize_features: stats dimension mismatch");
    for (double sd : stats.stddev)
        if (sd <= 0.0) throw ConfigError("normalize_features: std entries must be positive");
    Spectrogram out = s;
    for (size_t t = 0; t < s.frames; ++t)
        for (size_t m = 0; m < s.mel_bins; ++m)
            out.at(t, m) = (s.at(t, m) - stats.mean[m]) / stats.stddev[m];
    return out;
}

namespace {
constexpr char kFeatMagic[8] = {'N', 'N', 'P', 'M', 'F', 'E', 'A', 'T'};
constexpr uint32_t kFeatVersion = 1;
}  // namespace

void save_features(const std::string& path, const Spectrogram& s, const DspConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create feature file: " + path);
    out.write(kFeatMagic, 8);
    const uint32_t version = kFeatVersion;
    const uint32_t frames = static_cast<uint32_t>(s.frames);
    const uint32_t bins = static_cast<uint32_t>(s.mel_bins);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&frames), 4);
    out.write(reinterpret_cast<const char*>(&bins), 4);
    out.write(reinterpret_cast<const char*>(s.values.data()),
              static_cast<std::streamsize>(s.values.size() * sizeof(double)));
    if (!out) throw IoError("failed writing feature file: " + path);

    std::ofstream sidecar(path + ".json");
    if (!sidecar) throw IoError("cannot create feature sidecar: " + path + ".json");
    sidecar << config.to_json() << "\n";
}

Spectrogram load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kFeatMagic, 8) != 0)
        throw InputError(path + ": not a feature file (bad magic)");
    uint32_t version = 0, frames = 0, bins = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&frames), 4);
    in.read(reinterpret_cast<char*>(&bins), 4);
    if (version != kFeatVersion)
        throw InputError(path + ": unsupported feature file version " + std::to_string(version));
    Spectrogram s;
    s.frames = frames;
    s.mel_bins = bins;
    s.values.resize(static_cast<size_t>(frames) * bins);
    in.read(reinterpret_cast<char*>(s.values.data()),
            static_cast<std::streamsize>(s.values.size() * sizeof(double)));
    if (!in) throw InputError(path + ": truncated feature file");
    return s;
}

}  // namespace nnpm
