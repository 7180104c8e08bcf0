#include "nnpm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nnpm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace nnpm {

namespace {
constexpr char kMagic[8] = {'N', 'N', 'P', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
}  // namespace

const CheckpointBlock* Checkpoint::find(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) return &b;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create checkpoint: " + path);
    out.write(kMagic, 8);
    write_pod<uint32_t>(out, kVersion);
    write_pod<uint64_t>(out, ckpt.config_hash);
    write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.meta_json.size()));
    out.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.blocks.size()));
    for (const auto& b : ckpt.blocks) {
        if (b.name.size() > UINT16_MAX) throw ContractError("checkpoint block name too long");
        write_pod<uint16_t>(out, static_cast<uint16_t>(b.name.size()));
        out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(b.shape.size()));
        size_t count = 1;
        for (size_t d : b.shape) {
            write_pod<uint64_t>(out, static_cast<uint64_t>(d));
            count *= d;
        }
        if (count != b.data.size())
            throw ContractError("checkpoint block '" + b.name + "' shape/data mismatch");
        out.write(reinterpret_cast<const char*>(b.data.data()),
                  static_cast<std::streamsize>(b.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw InputError(path + ": not a checkpoint file (bad magic)");
    const auto version = read_pod<uint32_t>(in);
    if (version != kVersion)
        throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config_hash = read_pod<uint64_t>(in);
    const auto meta_len = read_pod<uint32_t>(in);
    ckpt.meta_json.resize(meta_len);
    in.read(ckpt.meta_json.data(), meta_len);
    const auto nblocks = read_pod<uint32_t>(in);
    ckpt.blocks.resize(nblocks);
    for (auto& b : ckpt.blocks) {
        const auto name_len = read_pod<uint16_t>(in);
        b.name.resize(name_len);
        in.read(b.name.data(), name_len);
        const auto ndim = read_pod<uint32_t>(in);
        b.shape.resize(ndim);
        size_t count = 1;
        for (auto& d : b.shape) {
            d = static_cast<size_t>(read_pod<uint64_t>(in));
            count *= d;
        }
        b.data.resize(count);
        in.read(reinterpret_cast<char*>(b.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw InputError(path + ": truncated checkpoint");
    }
    return ckpt;
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace nnpm
