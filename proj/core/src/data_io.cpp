#include "zipgait/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "zipgait/errors.hpp"
#include "zipgait/npy.hpp"

namespace zipgait {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON in " + what);
    return j;
}

}  // namespace

std::vector<std::string> DatasetManifest::identities() const {
    std::vector<std::string> ids;
    for (const auto& e : entries)
        if (std::find(ids.begin(), ids.end(), e.identity) == ids.end()) ids.push_back(e.identity);
    return ids;
}

void DatasetManifest::check_disjoint() const {
    std::vector<std::string> train, test;
    for (const auto& e : entries) {
        if (e.split == "train") train.push_back(e.identity);
        if (e.split == "test") test.push_back(e.identity);
    }
    for (const auto& id : train)
        if (std::find(test.begin(), test.end(), id) != test.end())
            throw InvalidParameter("identity " + id + " appears in both train and test");
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ostringstream out;
    for (const auto& e : m.entries) {
        json j;
        j["id"] = e.identity;
        j["seq"] = e.sequence;
        j["skeleton"] = e.skeleton_path;
        if (!e.silhouette_path.empty()) j["silhouette"] = e.silhouette_path;
        if (!e.split.empty()) j["split"] = e.split;
        out << j.dump() << "\n";
    }
    write_file(path, out.str());
}

DatasetManifest load_manifest(const std::string& path) {
    std::istringstream in(read_file(path));
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_json(line, path + ":" + std::to_string(lineno));
        ManifestEntry e;
        if (!j.contains("id") || !j.contains("seq") || !j.contains("skeleton"))
            throw ParseError(path + ":" + std::to_string(lineno) + ": missing id/seq/skeleton");
        e.identity = j["id"].get<std::string>();
        e.sequence = j["seq"].get<std::string>();
        e.skeleton_path = j["skeleton"].get<std::string>();
        if (j.contains("silhouette")) e.silhouette_path = j["silhouette"].get<std::string>();
        if (j.contains("split")) e.split = j["split"].get<std::string>();
        m.entries.push_back(std::move(e));
    }
    m.check_disjoint();
    return m;
}

void save_skeleton_json(const SkeletonSequence& s, const std::string& path) {
    json frames = json::array();
    for (const auto& fr : s.frames) {
        json f = json::array();
        for (const auto& jt : fr.joints) f.push_back({jt.x, jt.y, jt.c});
        frames.push_back(std::move(f));
    }
    json j;
    j["id"] = s.id;
    j["seq"] = s.seq;
    j["frames"] = std::move(frames);
    write_file(path, j.dump());
}

SkeletonSequence load_skeleton_json(const std::string& path) {
    json j = parse_json(read_file(path), path);
    if (!j.contains("id") || !j.contains("seq") || !j.contains("frames"))
        throw ParseError(path + ": missing id/seq/frames");
    SkeletonSequence s;
    s.id = j["id"].get<std::string>();
    s.seq = j["seq"].get<std::string>();
    const auto& frames = j["frames"];
    if (!frames.is_array()) throw ParseError(path + ": frames must be an array");
    for (size_t fi = 0; fi < frames.size(); ++fi) {
        const auto& f = frames[fi];
        if (!f.is_array() || f.size() != kNumJoints)
            throw ParseError(path + ": frame " + std::to_string(fi) + ": expected " +
                             std::to_string(kNumJoints) + " joints, got " +
                             std::to_string(f.size()));
        SkeletonFrame sk;
        for (size_t ji = 0; ji < static_cast<size_t>(kNumJoints); ++ji) {
            const auto& jt = f[ji];
            if (!jt.is_array() || jt.size() != 3)
                throw ParseError(path + ": frame " + std::to_string(fi) + " joint " +
                                 std::to_string(ji) + ": expected [x,y,c]");
            sk.joints[ji] = {jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()};
        }
        s.frames.push_back(sk);
    }
    return s;
}

std::pair<SkeletonSequence, std::optional<Tensor<float>>> load_pair(const ManifestEntry& entry) {
    SkeletonSequence s = load_skeleton_json(entry.skeleton_path);
    std::optional<Tensor<float>> sil;
    if (!entry.silhouette_path.empty()) {
        Tensor<float> t = load_npy(entry.silhouette_path);
        if (t.shape.size() != 4 || t.dim(1) != 1)
            throw ParseError(entry.silhouette_path + ": expected [F,1,H,W] silhouettes");
        if (t.dim(0) != static_cast<int>(s.frames.size()))
            throw AlignmentError(entry.sequence + ": " + std::to_string(s.frames.size()) +
                                 " skeleton frames vs " + std::to_string(t.dim(0)) +
                                 " silhouette frames");
        sil = std::move(t);
    }
    return {std::move(s), std::move(sil)};
}

DatasetManifest split_identities(const DatasetManifest& m, double train_fraction,
                                 std::uint64_t seed) {
    if (train_fraction < 0.0 || train_fraction > 1.0)
        throw InvalidParameter("train_fraction must be in [0,1]");
    std::vector<std::string> ids = m.identities();
    std::mt19937_64 g(seed);
    std::shuffle(ids.begin(), ids.end(), g);
    const size_t n_train =
        static_cast<size_t>(std::lround(train_fraction * static_cast<double>(ids.size())));
    std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    DatasetManifest out = m;
    for (auto& e : out.entries) {
        const bool tr = std::find(train.begin(), train.end(), e.identity) != train.end();
        e.split = tr ? "train" : "test";
    }
    out.check_disjoint();
    return out;
}

bool RunConfig::has(const std::string& key) const {
    return json::parse(json_text).contains(key);
}

double RunConfig::num(const std::string& key) const {
    json j = json::parse(json_text);
    if (!j.contains(key) || !j[key].is_number())
        throw ParseError("config: missing numeric key \"" + key + "\"");
    return j[key].get<double>();
}

double RunConfig::num_or(const std::string& key, double fallback) const {
    json j = json::parse(json_text);
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ParseError("config: key \"" + key + "\" is not a number");
    return j[key].get<double>();
}

std::string RunConfig::str_or(const std::string& key, const std::string& fallback) const {
    json j = json::parse(json_text);
    if (!j.contains(key)) return fallback;
    return j[key].get<std::string>();
}

std::vector<double> RunConfig::num_list(const std::string& key) const {
    json j = json::parse(json_text);
    if (!j.contains(key) || !j[key].is_array())
        throw ParseError("config: missing list key \"" + key + "\"");
    std::vector<double> out;
    for (const auto& v : j[key]) out.push_back(v.get<double>());
    return out;
}

void RunConfig::set_num(const std::string& key, double v) {
    json j = json::parse(json_text);
    j[key] = v;
    json_text = j.dump();
}

void RunConfig::set_str(const std::string& key, const std::string& v) {
    json j = json::parse(json_text);
    j[key] = v;
    json_text = j.dump();
}

std::string RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : json_text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(const std::string& text) {
    json j = parse_json(text, "config");
    if (!j.is_object()) throw ParseError("config: top level must be an object");
    if (!j.contains("schema") || !j["schema"].is_string())
        throw ParseError("config: missing \"schema\" key");
    RunConfig cfg;
    cfg.schema = j["schema"].get<std::string>();
    cfg.json_text = j.dump();  // canonical: sorted keys, no whitespace
    return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

void save_config(const RunConfig& cfg, const std::string& path) {
    write_file(path, cfg.json_text + "\n");
}

namespace {
constexpr char kCkptMagic[8] = {'Z', 'G', 'C', 'K', '0', '1', '\n', '\0'};
constexpr int kCkptSchema = 1;
}  // namespace

void save_checkpoint(const nn::ParamStore<float>& params, const CheckpointMeta& meta,
                     const std::string& path) {
    json arrays = json::array();
    for (const auto& e : params.entries()) {
        json a;
        a["name"] = e.name;
        a["shape"] = e.value.shape;
        arrays.push_back(std::move(a));
    }
    json j;
    j["format"] = kCkptSchema;
    j["config_hash"] = meta.config_hash;
    j["seed"] = meta.seed;
    j["step"] = meta.step;
    j["adam_t"] = params.adam_t();
    if (!meta.extra.empty()) j["extra"] = meta.extra;
    j["arrays"] = std::move(arrays);
    const std::string head = j.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write " + path);
    f.write(kCkptMagic, 8);
    const std::uint64_t hlen = head.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& e : params.entries())
        f.write(reinterpret_cast<const char*>(e.value.data.data()),
                static_cast<std::streamsize>(e.value.data.size() * sizeof(float)));
    if (!f) throw ParseError("short write to " + path);
}

namespace {

struct CkptHead {
    json manifest;
    std::string payload;
};

CkptHead read_ckpt(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IncompatibleCheckpoint("cannot open " + path);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IncompatibleCheckpoint(path + ": bad magic");
    std::uint64_t hlen = 0;
    if (!f.read(reinterpret_cast<char*>(&hlen), 8) || hlen > (1ull << 30))
        throw IncompatibleCheckpoint(path + ": bad header length");
    std::string head(hlen, '\0');
    if (!f.read(head.data(), static_cast<std::streamsize>(hlen)))
        throw IncompatibleCheckpoint(path + ": truncated header");
    json j = json::parse(head, nullptr, false);
    if (j.is_discarded() || !j.contains("format"))
        throw IncompatibleCheckpoint(path + ": malformed manifest");
    if (j["format"].get<int>() != kCkptSchema)
        throw IncompatibleCheckpoint(path + ": schema version " +
                                     std::to_string(j["format"].get<int>()) + ", expected " +
                                     std::to_string(kCkptSchema));
    std::ostringstream rest;
    rest << f.rdbuf();
    std::uint64_t want = 0;
    for (const auto& a : j["arrays"]) {
        std::uint64_t n = 1;
        for (int d : a["shape"].get<std::vector<int>>()) n *= static_cast<std::uint64_t>(d);
        want += n * sizeof(float);
    }
    std::string payload = rest.str();
    if (payload.size() != want)
        throw IncompatibleCheckpoint(path + ": payload " + std::to_string(payload.size()) +
                                     " bytes, expected " + std::to_string(want));
    return {std::move(j), std::move(payload)};
}

CheckpointMeta meta_of(const json& j) {
    CheckpointMeta meta;
    meta.config_hash = j.value("config_hash", std::string());
    meta.seed = j.value("seed", std::uint64_t(0));
    meta.step = j.value("step", std::int64_t(0));
    if (j.contains("extra"))
        for (const auto& [k, v] : j["extra"].items()) meta.extra[k] = v.get<double>();
    return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(nn::ParamStore<float>& params, const std::string& path) {
    CkptHead ck = read_ckpt(path);
    const auto& arrays = ck.manifest["arrays"];
    if (arrays.size() != params.entries().size())
        throw IncompatibleCheckpoint(path + ": " + std::to_string(arrays.size()) +
                                     " arrays, store has " +
                                     std::to_string(params.entries().size()));
    const char* p = ck.payload.data();
    for (size_t i = 0; i < arrays.size(); ++i) {
        auto& e = params.entries()[i];
        const std::string name = arrays[i]["name"].get<std::string>();
        const auto shape = arrays[i]["shape"].get<std::vector<int>>();
        if (name != e.name || shape != e.value.shape)
            throw IncompatibleCheckpoint(path + ": array " + name + " does not match parameter " +
                                         e.name);
        const size_t bytes = e.value.data.size() * sizeof(float);
        std::memcpy(e.value.data.data(), p, bytes);
        p += bytes;
    }
    params.set_adam_t(ck.manifest.value("adam_t", 0));
    return meta_of(ck.manifest);
}

std::pair<CheckpointMeta, std::int64_t> peek_checkpoint(const std::string& path) {
    CkptHead ck = read_ckpt(path);
    std::int64_t n = 0;
    for (const auto& a : ck.manifest["arrays"]) {
        std::int64_t e = 1;
        for (int d : a["shape"].get<std::vector<int>>()) e *= d;
        n += e;
    }
    return {meta_of(ck.manifest), n};
}

}  // namespace zipgait
