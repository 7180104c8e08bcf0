#include "nnpm/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "nnpm/errors.hpp"

namespace nnpm {

namespace {

constexpr int kRequiredRate = 16000;

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open WAV file: " + path);

    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0)
        throw InputError(path + ": not a RIFF file");
    read_u32(in);  // chunk size, unused
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0)
        throw InputError(path + ": not a WAVE file");

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    std::vector<double> samples;
    bool have_data = false;

    while (in.read(tag, 4)) {
        const uint32_t size = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in);  // byte rate
            read_u16(in);  // block align
            bits = read_u16(in);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw InputError(path + ": data chunk before fmt chunk");
            if (format != 1) throw InputError(path + ": only PCM encoding supported");
            if (channels != 1) throw InputError(path + ": only mono supported, got " +
                                                std::to_string(channels) + " channels");
            if (bits != 16) throw InputError(path + ": only 16-bit samples supported, got " +
                                             std::to_string(bits));
            if (static_cast<int>(rate) != kRequiredRate)
                throw InputError(path + ": sample rate must be 16000 Hz, got " +
                                 std::to_string(rate));
            const size_t count = size / 2;
            samples.resize(count);
            std::vector<char> raw(size);
            in.read(raw.data(), size);
            if (!in) throw InputError(path + ": truncated data chunk");
            for (size_t i = 0; i < count; ++i) {
                const int16_t v = static_cast<int16_t>(
                    static_cast<uint16_t>(static_cast<unsigned char>(raw[2 * i])) |
                    (static_cast<uint16_t>(static_cast<unsigned char>(raw[2 * i + 1])) << 8));
                samples[i] = static_cast<double>(v) / 32768.0;
            }
            have_data = true;
            if (size % 2 == 1) in.seekg(1, std::ios::cur);
        } else {
            in.seekg(size + (size % 2), std::ios::cur);
        }
    }
    if (!have_data) throw InputError(path + ": no data chunk found");
    return Waveform{std::move(samples), kRequiredRate};
}

void write_wav(const std::string& path, const Waveform& w) {
    if (w.sample_rate_hz != kRequiredRate)
        throw InputError("write_wav: sample rate must be 16000 Hz");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create WAV file: " + path);

    const uint32_t data_size = static_cast<uint32_t>(w.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, kRequiredRate);
    write_u32(out, kRequiredRate * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_size);
    for (double s : w.samples) {
        const double clamped = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
        const int16_t q = static_cast<int16_t>(std::llround(clamped * 32767.0));
        write_u16(out, static_cast<uint16_t>(q));
    }
    if (!out) throw IoError("failed writing WAV file: " + path);
}

}  // namespace nnpm
