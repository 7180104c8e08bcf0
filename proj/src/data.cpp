#include "nnpm/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nnpm/errors.hpp"
#include "nnpm/rng.hpp"
#include "nnpm/wav.hpp"

namespace fs = std::filesystem;

namespace nnpm {

int class_id_from_name(const std::string& name) {
    for (size_t i = 0; i < kClassNames.size(); ++i)
        if (name == kClassNames[i]) return static_cast<int>(i);
    throw InputError("unknown class label '" + name +
                     "' (expected angry, happy, sad, or neutral)");
}

const char* class_name(int id) {
    if (id < 0 || static_cast<size_t>(id) >= kClassNames.size())
        throw InputError("class id " + std::to_string(id) + " out of range");
    return kClassNames[static_cast<size_t>(id)];
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": invalid JSON: " + e.what());
    }
    const fs::path base = fs::path(path).parent_path();

    Manifest m;
    m.domain = j.value("domain", "");
    if (!j.contains("entries") || !j["entries"].is_array())
        throw InputError(path + ": manifest must contain an 'entries' array");

    std::set<std::string> seen_ids;
    for (const auto& e : j["entries"]) {
        ManifestEntry entry;
        entry.id = e.value("id", "");
        if (entry.id.empty()) throw InputError(path + ": entry without id");
        if (!seen_ids.insert(entry.id).second)
            throw InputError(path + ": duplicate id '" + entry.id + "'");

        auto resolve = [&](const std::string& rel) {
            fs::path p(rel);
            return (p.is_absolute() ? p : base / p).lexically_normal().string();
        };
        if (e.contains("audio")) entry.audio_path = resolve(e["audio"].get<std::string>());
        if (e.contains("features")) entry.feature_path = resolve(e["features"].get<std::string>());
        if (entry.audio_path.empty() && entry.feature_path.empty())
            throw InputError(path + ": entry '" + entry.id +
                             "' needs an 'audio' or 'features' path");
        for (const std::string& p : {entry.audio_path, entry.feature_path})
            if (!p.empty() && !fs::exists(p))
                throw InputError(path + ": entry '" + entry.id + "' references missing file " + p);

        if (e.contains("label")) entry.label = class_id_from_name(e["label"].get<std::string>());
        entry.group = e.value("group", "");
        entry.domain = e.value("domain", m.domain);
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
    const fs::path base = fs::path(path).parent_path();
    nlohmann::json j;
    j["domain"] = manifest.domain;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        nlohmann::json je;
        je["id"] = e.id;
        auto relativize = [&](const std::string& p) {
            const auto rel = fs::path(p).lexically_relative(base);
            return rel.empty() || rel.native().rfind("..", 0) == 0 ? p : rel.string();
        };
        if (!e.audio_path.empty()) je["audio"] = relativize(e.audio_path);
        if (!e.feature_path.empty()) je["features"] = relativize(e.feature_path);
        if (e.label) je["label"] = class_name(*e.label);
        if (!e.group.empty()) je["group"] = e.group;
        if (!e.domain.empty() && e.domain != manifest.domain) je["domain"] = e.domain;
        j["entries"].push_back(je);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot create manifest: " + path);
    out << j.dump(2) << "\n";
}

SplitResult split_stratified(const Manifest& manifest, double train_fraction, uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("split: train_fraction must be in (0, 1)");
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (!e.label) throw InputError("split: entry '" + e.id + "' has no label");
        by_class[*e.label].push_back(i);
    }
    if (by_class.empty()) throw ConfigError("split: empty manifest");

    SplitResult out;
    out.train.domain = manifest.domain;
    out.test.domain = manifest.domain;
    std::vector<uint8_t> to_train(manifest.entries.size(), 0);
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 2)
            throw ConfigError("split: class '" + std::string(class_name(label)) +
                              "' has fewer than 2 examples");
        Rng rng(derive_seed(seed, 0x5157, static_cast<uint64_t>(label)));
        rng.shuffle(indices);
        size_t n_train = static_cast<size_t>(
            std::llround(train_fraction * static_cast<double>(indices.size())));
        n_train = std::min(std::max<size_t>(n_train, 1), indices.size() - 1);
        for (size_t k = 0; k < n_train; ++k) to_train[indices[k]] = 1;
    }
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        (to_train[i] ? out.train : out.test).entries.push_back(manifest.entries[i]);
    return out;
}

SplitResult split_held_out_groups(const Manifest& manifest,
                                  const std::set<std::string>& held_out_groups) {
    SplitResult out;
    out.train.domain = manifest.domain;
    out.test.domain = manifest.domain;
    for (const auto& e : manifest.entries) {
        if (e.group.empty())
            throw InputError("group split: entry '" + e.id + "' has no group tag");
        (held_out_groups.count(e.group) ? out.test : out.train).entries.push_back(e);
    }
    return out;
}

LabeledCorpus load_labeled_corpus(const Manifest& manifest) {
    LabeledCorpus corpus;
    for (const auto& e : manifest.entries) {
        if (!e.label)
            throw InputError("labeled corpus: entry '" + e.id + "' has no label");
        if (e.feature_path.empty())
            throw InputError("labeled corpus: entry '" + e.id +
                             "' has no features; run extraction first");
        corpus.examples.push_back(
            LabeledExample{e.id, load_features(e.feature_path), static_cast<size_t>(*e.label)});
    }
    return corpus;
}

UnlabeledCorpus load_unlabeled_corpus(const Manifest& manifest) {
    UnlabeledCorpus corpus;
    for (const auto& e : manifest.entries) {
        if (e.feature_path.empty())
            throw InputError("unlabeled corpus: entry '" + e.id +
                             "' has no features; run extraction first");
        corpus.examples.push_back(UnlabeledExample{e.id, load_features(e.feature_path)});
    }
    return corpus;
}

void SyntheticSpec::validate() const {
    if (utterances_per_class == 0) throw ConfigError("synthetic: utterances_per_class must be > 0");
    if (min_seconds <= 0.0 || max_seconds < min_seconds)
        throw ConfigError("synthetic: need 0 < min_seconds <= max_seconds");
    for (const auto& shift : {source_shift, target_shift}) {
        if (shift.pitch_factor <= 0.0) throw ConfigError("synthetic: pitch_factor must be positive");
        if (shift.channel_alpha < 0.0 || shift.channel_alpha >= 1.0)
            throw ConfigError("synthetic: channel_alpha must be in [0, 1)");
        if (shift.noise_floor < 0.0) throw ConfigError("synthetic: noise_floor must be >= 0");
    }
    for (size_t a = 0; a < classes.size(); ++a)
        for (size_t b = a + 1; b < classes.size(); ++b)
            if (classes[a].carrier_hz == classes[b].carrier_hz &&
                classes[a].mod_rate_hz == classes[b].mod_rate_hz)
                throw ConfigError("synthetic: classes " + std::to_string(a) + " and " +
                                  std::to_string(b) + " have identical tone parameters");
}

std::string SyntheticSpec::to_json() const {
    nlohmann::json j;
    for (const auto& c : classes) {
        nlohmann::json jc;
        jc["carrier_hz"] = c.carrier_hz;
        jc["mod_rate_hz"] = c.mod_rate_hz;
        jc["mod_depth"] = c.mod_depth;
        jc["harmonic2"] = c.harmonic2;
        jc["noise"] = c.noise;
        j["classes"].push_back(jc);
    }
    auto shift_json = [](const DomainShift& s) {
        nlohmann::json js;
        js["pitch_factor"] = s.pitch_factor;
        js["channel_alpha"] = s.channel_alpha;
        js["noise_floor"] = s.noise_floor;
        return js;
    };
    j["source_shift"] = shift_json(source_shift);
    j["target_shift"] = shift_json(target_shift);
    j["utterances_per_class"] = utterances_per_class;
    j["min_seconds"] = min_seconds;
    j["max_seconds"] = max_seconds;
    j["freq_jitter"] = freq_jitter;
    j["seed"] = seed;
    return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic spec: invalid JSON: ") + e.what());
    }
    SyntheticSpec spec;
    if (j.contains("classes")) {
        const auto& arr = j["classes"];
        if (!arr.is_array() || arr.size() != 4)
            throw ConfigError("synthetic spec: 'classes' must list exactly 4 tone sets");
        for (size_t i = 0; i < 4; ++i) {
            spec.classes[i].carrier_hz = arr[i].value("carrier_hz", spec.classes[i].carrier_hz);
            spec.classes[i].mod_rate_hz = arr[i].value("mod_rate_hz", spec.classes[i].mod_rate_hz);
            spec.classes[i].mod_depth = arr[i].value("mod_depth", spec.classes[i].mod_depth);
            spec.classes[i].harmonic2 = arr[i].value("harmonic2", spec.classes[i].harmonic2);
            spec.classes[i].noise = arr[i].value("noise", spec.classes[i].noise);
        }
    }
    auto parse_shift = [&](const char* key, DomainShift& s) {
        if (!j.contains(key)) return;
        s.pitch_factor = j[key].value("pitch_factor", s.pitch_factor);
        s.channel_alpha = j[key].value("channel_alpha", s.channel_alpha);
        s.noise_floor = j[key].value("noise_floor", s.noise_floor);
    };
    parse_shift("source_shift", spec.source_shift);
    parse_shift("target_shift", spec.target_shift);
    spec.utterances_per_class = j.value("utterances_per_class", spec.utterances_per_class);
    spec.min_seconds = j.value("min_seconds", spec.min_seconds);
    spec.max_seconds = j.value("max_seconds", spec.max_seconds);
    spec.freq_jitter = j.value("freq_jitter", spec.freq_jitter);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

namespace {

Waveform synthesize_utterance(const SyntheticSpec& spec, const ClassTone& tone,
                              const DomainShift& shift, Rng& rng) {
    const double seconds = rng.uniform(spec.min_seconds, spec.max_seconds);
    const size_t n = static_cast<size_t>(std::llround(seconds * 16000.0));

    const double jitter = 1.0 + spec.freq_jitter * rng.uniform(-1.0, 1.0);
    const double carrier = tone.carrier_hz * jitter * shift.pitch_factor;
    const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
    const double phase1 = rng.uniform(0.0, 2.0 * M_PI);

    Waveform w;
    w.samples.resize(n);
    const double dt = 1.0 / 16000.0;
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double env =
            1.0 - tone.mod_depth * (0.5 + 0.5 * std::sin(2.0 * M_PI * tone.mod_rate_hz * t + phase1));
        double s = std::sin(2.0 * M_PI * carrier * t + phase0) +
                   tone.harmonic2 * std::sin(4.0 * M_PI * carrier * t + 2.0 * phase0);
        s = env * s + tone.noise * rng.uniform(-1.0, 1.0);
        w.samples[i] = s;
    }
    // domain channel: one-pole lowpass, then the domain noise floor
    if (shift.channel_alpha > 0.0) {
        double prev = 0.0;
        for (auto& v : w.samples) {
            prev = (1.0 - shift.channel_alpha) * v + shift.channel_alpha * prev;
            v = prev;
        }
    }
    if (shift.noise_floor > 0.0)
        for (auto& v : w.samples) v += shift.noise_floor * rng.uniform(-1.0, 1.0);

    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::fabs(v));
    const double gain = peak > 0.0 ? 0.6 / peak : 1.0;
    for (auto& v : w.samples) v *= gain;
    return w;
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    spec.validate();
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root / "source", ec);
    fs::create_directories(root / "target", ec);
    if (!fs::exists(root / "source") || !fs::exists(root / "target"))
        throw IoError("cannot create synthetic corpus directories under " + out_dir);

    SyntheticResult result;
    const char* domains[2] = {"source", "target"};
    for (int d = 0; d < 2; ++d) {
        const DomainShift& shift = d == 0 ? spec.source_shift : spec.target_shift;
        Manifest manifest;
        manifest.domain = domains[d];
        for (size_t cls = 0; cls < 4; ++cls) {
            for (size_t k = 0; k < spec.utterances_per_class; ++k) {
                Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(d), cls, k));
                Waveform w = synthesize_utterance(spec, spec.classes[cls], shift, rng);
                std::ostringstream name;
                name << domains[d] << "_" << class_name(static_cast<int>(cls)) << "_";
                name.fill('0');
                name.width(4);
                name << k;
                const fs::path wav_path = root / domains[d] / (name.str() + ".wav");
                write_wav(wav_path.string(), w);

                ManifestEntry entry;
                entry.id = name.str();
                entry.audio_path = wav_path.lexically_normal().string();
                entry.label = static_cast<int>(cls);
                entry.domain = domains[d];
                manifest.entries.push_back(std::move(entry));
            }
        }
        const fs::path man_path = root / (std::string(domains[d]) + "_manifest.json");
        save_manifest(man_path.string(), manifest);
        if (d == 0)
            result.source_manifest = man_path.string();
        else
            result.target_manifest = man_path.string();
        result.utterances_per_domain = manifest.entries.size();
    }
    return result;
}

}  // namespace nnpm
