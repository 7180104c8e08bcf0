#ifndef NNPM_DATA_HPP
#define NNPM_DATA_HPP

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nnpm/dsp.hpp"

namespace nnpm {

// Canonical class ids. Corpus-specific synonyms (e.g. "excited" folded into
// happy) are a manifest-authoring concern, not runtime logic.
inline constexpr std::array<const char*, 4> kClassNames = {"angry", "happy", "sad", "neutral"};
inline constexpr size_t kNumClasses = 4;

int class_id_from_name(const std::string& name);
const char* class_name(int id);

struct ManifestEntry {
    std::string id;
    std::string audio_path;     // resolved absolute path; may be empty
    std::string feature_path;   // resolved absolute path; may be empty
    std::optional<int> label;   // absent for adaptation corpora
    std::string group;          // speaker/session tag for held-out splits
    std::string domain;
};

struct Manifest {
    std::string domain;
    std::vector<ManifestEntry> entries;
};

// Parses and validates a JSON manifest. Relative paths resolve against the
// manifest's directory; duplicate ids, unknown labels, and missing files are
// rejected with the offender named.
Manifest load_manifest(const std::string& path);

// Writes entries with paths relative to the manifest's directory when
// possible.
void save_manifest(const std::string& path, const Manifest& manifest);

// Stratified split by class; deterministic under seed; exact disjoint
// partition with per-class proportions within one example.
struct SplitResult {
    Manifest train;
    Manifest test;
};
SplitResult split_stratified(const Manifest& manifest, double train_fraction, uint64_t seed);

// Group-disjoint split: entries whose group is listed go to the held-out
// side, everything else stays.
SplitResult split_held_out_groups(const Manifest& manifest,
                                  const std::set<std::string>& held_out_groups);

// In-memory corpora. The unlabeled type cannot leak labels to a trainer by
// construction.
struct LabeledExample {
    std::string id;
    Spectrogram features;
    size_t label = 0;
};
struct LabeledCorpus {
    std::vector<LabeledExample> examples;
    size_t size() const { return examples.size(); }
};
struct UnlabeledExample {
    std::string id;
    Spectrogram features;
};
struct UnlabeledCorpus {
    std::vector<UnlabeledExample> examples;
    size_t size() const { return examples.size(); }
};

// Feature loading; every entry must carry a feature path (run extraction
// first). The labeled loader also requires labels.
LabeledCorpus load_labeled_corpus(const Manifest& manifest);
UnlabeledCorpus load_unlabeled_corpus(const Manifest& manifest);

// Synthetic two-domain corpus. Class identity is carried by carrier
// frequency and amplitude-modulation structure; the domain shift applies a
// global pitch factor, a one-pole channel filter, and a noise floor.
struct ClassTone {
    double carrier_hz = 440.0;
    double mod_rate_hz = 4.0;
    double mod_depth = 0.9;
    double harmonic2 = 0.3;   // relative level of the second harmonic
    double noise = 0.01;      // in-class white noise level
};

struct DomainShift {
    double pitch_factor = 1.0;
    double channel_alpha = 0.0;  // one-pole lowpass coefficient in [0,1)
    double noise_floor = 0.0;
};

struct SyntheticSpec {
    std::array<ClassTone, 4> classes{
        ClassTone{500.0, 2.0, 0.9, 0.5, 0.01},
        ClassTone{950.0, 5.0, 0.9, 0.3, 0.01},
        ClassTone{1800.0, 10.0, 0.9, 0.2, 0.01},
        ClassTone{3400.0, 20.0, 0.9, 0.1, 0.01},
    };
    DomainShift source_shift{};                  // identity by default
    DomainShift target_shift{1.25, 0.3, 0.02};
    size_t utterances_per_class = 50;
    double min_seconds = 3.0;
    double max_seconds = 10.0;
    double freq_jitter = 0.06;  // relative per-utterance carrier jitter
    uint64_t seed = 1234;

    void validate() const;
    std::string to_json() const;
    static SyntheticSpec from_json(const std::string& json);
};

// Writes WAVs under <out_dir>/{source,target}/ plus labeled manifests
// source_manifest.json and target_manifest.json. Byte-deterministic for a
// fixed spec.
struct SyntheticResult {
    std::string source_manifest;
    std::string target_manifest;
    size_t utterances_per_domain = 0;
};
SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace nnpm

#endif
