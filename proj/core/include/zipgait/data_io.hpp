#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zipgait/nn/params.hpp"
#include "zipgait/skeleton.hpp"
#include "zipgait/tensor.hpp"

namespace zipgait {

struct ManifestEntry {
    std::string identity;
    std::string sequence;
    std::string skeleton_path;
    std::string silhouette_path;  // empty when absent
    std::string split;            // "train", "test" or empty
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::vector<std::string> identities() const;
    // Throws InvalidParameter if a train identity also appears in test.
    void check_disjoint() const;
};

// JSON-lines manifest, one entry per line.
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Skeleton sequence as a JSON document:
//   {"id": str, "seq": str, "frames": [[[x,y,c] x17], ...]}
void save_skeleton_json(const SkeletonSequence& s, const std::string& path);
SkeletonSequence load_skeleton_json(const std::string& path);

// Loads the skeleton sequence and, when present, the silhouette volume
// [F,1,H,W]. Frame counts must agree.
std::pair<SkeletonSequence, std::optional<Tensor<float>>> load_pair(const ManifestEntry& entry);

// Deterministic identity-level partition; tags every entry train/test.
DatasetManifest split_identities(const DatasetManifest& m, double train_fraction,
                                 std::uint64_t seed);

// Run configuration: a flat JSON object with a mandatory "schema" key.
// Values are numbers or strings; lists of numbers are allowed.
struct RunConfig {
    std::string schema;
    std::string json_text;  // canonical serialized form

    bool has(const std::string& key) const;
    double num(const std::string& key) const;
    double num_or(const std::string& key, double fallback) const;
    std::string str_or(const std::string& key, const std::string& fallback) const;
    std::vector<double> num_list(const std::string& key) const;
    void set_num(const std::string& key, double v);
    void set_str(const std::string& key, const std::string& v);

    // FNV-1a over the canonical dump, hex-encoded.
    std::string hash() const;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
void save_config(const RunConfig& cfg, const std::string& path);

// Single-file checkpoint: magic, manifest JSON (names/shapes/offsets plus
// schema version, config hash, seed, step, optimizer step counter), then
// raw little-endian float32 payload.
struct CheckpointMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
    // Numeric hyper-parameters needed to rebuild the matching net
    // (e.g. condition channels, part count).
    std::map<std::string, double> extra;

    double extra_or(const std::string& key, double fallback) const {
        auto it = extra.find(key);
        return it == extra.end() ? fallback : it->second;
    }
};

void save_checkpoint(const nn::ParamStore<float>& params, const CheckpointMeta& meta,
                     const std::string& path);

// Loads values (and optimizer state counter) into an already-registered
// store; names and shapes must match exactly.
CheckpointMeta load_checkpoint(nn::ParamStore<float>& params, const std::string& path);

// Reads only the metadata and total parameter count without a store.
std::pair<CheckpointMeta, std::int64_t> peek_checkpoint(const std::string& path);

}  // namespace zipgait
