// Single entry point: gen-data / train-diffgait / sample / train-zipgait / eval.
// Exit codes: 0 success, 1 usage, 2 data error, 3 training divergence.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zipgait/data_io.hpp"
#include "zipgait/diffgait.hpp"
#include "zipgait/diffgait_engine.hpp"
#include "zipgait/errors.hpp"
#include "zipgait/npy.hpp"
#include "zipgait/pgi.hpp"
#include "zipgait/png_io.hpp"
#include "zipgait/recognition.hpp"
#include "zipgait/schedule.hpp"
#include "zipgait/synthetic.hpp"

namespace fs = std::filesystem;
using namespace zipgait;

namespace {

double now_ms() {
    using clk = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clk::now().time_since_epoch()).count();
}

std::uint64_t fnv64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

LimbTable load_limbs(const std::string& path) {
    if (path.empty()) return coco17_limbs();
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.contains("edges")) throw ParseError(path + ": expected {\"edges\": [[a,b],...]}");
    LimbTable t;
    for (const auto& e : j["edges"]) t.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    return t;
}

std::string resolve(const std::string& base_file, const std::string& p) {
    fs::path q(p);
    if (q.is_absolute()) return p;
    return (fs::path(base_file).parent_path() / q).string();
}

struct LoadedSeq {
    SkeletonSequence skel;
    std::optional<Tensor<float>> sil;  // [F,1,H,W] in {0,1}
    std::string identity;
    std::string sequence;
};

std::vector<LoadedSeq> load_split(const std::string& manifest_path, const std::string& split) {
    DatasetManifest m = load_manifest(manifest_path);
    std::vector<LoadedSeq> out;
    for (const auto& e : m.entries) {
        if (split != "all" && !e.split.empty() && e.split != split) continue;
        ManifestEntry r = e;
        r.skeleton_path = resolve(manifest_path, e.skeleton_path);
        if (!e.silhouette_path.empty()) r.silhouette_path = resolve(manifest_path, e.silhouette_path);
        auto [skel, sil] = load_pair(r);
        out.push_back({std::move(skel), std::move(sil), e.identity, e.sequence});
    }
    if (out.empty()) throw ParseError(manifest_path + ": no sequences selected");
    return out;
}

// [F,2,H,W] heat-skeleton volume for one sequence.
Tensor<float> heat_volume(const SkeletonSequence& s, const LimbTable& limbs, double sigma) {
    const int F = static_cast<int>(s.frames.size());
    Tensor<float> out({F, 2, kCanvasH, kCanvasW});
    for (int f = 0; f < F; ++f) {
        HeatSkeleton h = make_heat_skeleton(s.frames[static_cast<size_t>(f)], limbs, sigma);
        std::copy(h.data.begin(), h.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(f) * h.numel());
    }
    return out;
}

FusionWeights fusion_weights_for(const RunConfig& cfg, int steps) {
    if (cfg.has("fusion_weights")) {
        FusionWeights w{cfg.num_list("fusion_weights")};
        if (static_cast<int>(w.w.size()) != steps)
            throw InvalidParameter("fusion_weights length must equal sample steps");
        return w;
    }
    if (steps == 5) return FusionWeights::recommended();
    return FusionWeights{std::vector<double>(static_cast<size_t>(steps), 1.0 / steps)};
}

// Reconstructs the stage-one composite for one sequence with frozen DiffGait.
Tensor<float> composite_for(DiffGaitNet<float>& net, const Tensor<float>& heat,
                            const NoiseSchedule& sched, int steps, double eta,
                            const FusionWeights& w, Rng& rng) {
    MultiLevelSilhouettes ml = sample_silhouettes(net, heat, sched, steps, eta, rng);
    return stage_one_combine(ml, w);
}

void write_csv_row(std::ofstream& csv, std::int64_t step, double loss, double wall_ms) {
    csv << step << "," << loss << "," << wall_ms << "\n";
    csv.flush();
}

int cmd_gen_data(int identities, int seqs_per_id, int frames, std::uint64_t seed,
                 const std::string& out, double train_fraction) {
    if (identities < 1 || seqs_per_id < 1 || frames < 1)
        throw InvalidParameter("identities, seqs-per-id and frames must be >= 1");
    fs::create_directories(fs::path(out) / "skeletons");
    fs::create_directories(fs::path(out) / "silhouettes");

    DatasetManifest manifest;
    long total_frames = 0;
    for (int i = 0; i < identities; ++i) {
        FigureSpec spec = generate_identity(seed + static_cast<std::uint64_t>(i));
        char idname[32];
        std::snprintf(idname, sizeof idname, "id%03d", i);
        for (int s = 0; s < seqs_per_id; ++s) {
            char seqname[32];
            std::snprintf(seqname, sizeof seqname, "seq%02d", s);
            WalkerSequence ws = render_sequence(
                spec, frames, seed * 7919 + static_cast<std::uint64_t>(i) * 131 +
                                  static_cast<std::uint64_t>(s));
            SkeletonSequence sk;
            sk.id = idname;
            sk.seq = seqname;
            sk.frames = ws.skeletons;
            const std::string rel_sk = std::string("skeletons/") + idname + "_" + seqname + ".json";
            const std::string rel_si = std::string("silhouettes/") + idname + "_" + seqname + ".npy";
            save_skeleton_json(sk, (fs::path(out) / rel_sk).string());
            save_npy((fs::path(out) / rel_si).string(), ws.silhouettes);
            manifest.entries.push_back({idname, seqname, rel_sk, rel_si, ""});
            total_frames += frames;
        }
    }
    if (train_fraction < 1.0)
        manifest = split_identities(manifest, train_fraction, seed);
    save_manifest(manifest, (fs::path(out) / "manifest.jsonl").string());
    std::printf("wrote %zu sequences, %ld frames, %d identities -> %s\n",
                manifest.entries.size(), total_frames, identities, out.c_str());
    return 0;
}

int cmd_train_diffgait(const std::string& config_path, const std::string& data,
                       const std::string& out, int steps, std::uint64_t seed,
                       const std::string& resume, const std::string& limbs_path, double lr_flag) {
    RunConfig cfg = config_path.empty() ? parse_config(R"({"schema":"zipgait-run-v1"})")
                                        : load_config(config_path);
    const int T = static_cast<int>(cfg.num_or("T", 1000));
    const int C = static_cast<int>(cfg.num_or("diffgait_C", 64));
    const int batch = static_cast<int>(cfg.num_or("diffgait_batch", 4));
    const double sigma = cfg.num_or("sigma", 2.0);
    DiffGaitTrainOptions opt;
    opt.lr = lr_flag > 0 ? lr_flag : cfg.num_or("diffgait_lr", 0.01);

    const LimbTable limbs = load_limbs(limbs_path);
    NoiseSchedule sched = cosine_schedule(T);
    DiffGaitNet<float> net({C}, seed);

    // Frame pool: aligned (heat, silhouette) pairs across all train sequences.
    std::vector<Tensor<float>> heats, sils;
    for (const auto& sq : load_split(data, "train")) {
        if (!sq.sil) throw ParseError(sq.sequence + ": silhouettes required for training");
        Tensor<float> hv = heat_volume(sq.skel, limbs, sigma);
        const int F = hv.dim(0);
        for (int f = 0; f < F; ++f) {
            Tensor<float> h({1, 2, kCanvasH, kCanvasW});
            Tensor<float> s({1, 1, kCanvasH, kCanvasW});
            const std::int64_t ph = h.numel(), ps = s.numel();
            std::copy_n(hv.data.begin() + f * ph, ph, h.data.begin());
            // [0,1] -> [-1,1]
            for (std::int64_t i = 0; i < ps; ++i)
                s.data[static_cast<size_t>(i)] =
                    2.0f * sq.sil->data[static_cast<size_t>(f * ps + i)] - 1.0f;
            heats.push_back(std::move(h));
            sils.push_back(std::move(s));
        }
    }

    std::int64_t start_step = 0;
    CheckpointMeta meta;
    if (!resume.empty()) {
        meta = load_checkpoint(net.params(), resume);
        start_step = meta.step;
    }
    meta.config_hash = cfg.hash();
    meta.seed = seed;
    meta.extra["C"] = C;
    meta.extra["T"] = T;

    fs::create_directories(out);
    const std::string csv_path = (fs::path(out) / "train_diffgait.csv").string();
    std::ofstream csv(csv_path, start_step > 0 ? std::ios::app : std::ios::trunc);
    if (start_step == 0) csv << "step,loss,wall_ms\n# config " << cfg.hash() << "\n";

    Rng rng(seed ^ fnv64("train" + std::to_string(start_step)));
    const int n = static_cast<int>(heats.size());
    const double t0 = now_ms();
    double loss = 0;
    for (std::int64_t step = start_step + 1; step <= start_step + steps; ++step) {
        Tensor<float> hb({batch, 2, kCanvasH, kCanvasW});
        Tensor<float> sb({batch, 1, kCanvasH, kCanvasW});
        for (int b = 0; b < batch; ++b) {
            const int k = static_cast<int>(rng.uniform_int(0, n - 1));
            std::copy(heats[static_cast<size_t>(k)].data.begin(),
                      heats[static_cast<size_t>(k)].data.end(),
                      hb.data.begin() + static_cast<std::ptrdiff_t>(b) * 2 * kCanvasH * kCanvasW);
            std::copy(sils[static_cast<size_t>(k)].data.begin(),
                      sils[static_cast<size_t>(k)].data.end(),
                      sb.data.begin() + static_cast<std::ptrdiff_t>(b) * kCanvasH * kCanvasW);
        }
        loss = train_step_diffgait(net, hb, sb, sched, opt, rng);
        write_csv_row(csv, step, loss, now_ms() - t0);
    }
    meta.step = start_step + steps;
    save_checkpoint(net.params(), meta, (fs::path(out) / "diffgait.ckpt").string());
    std::printf("trained %d steps, final loss %.6f, checkpoint %s\n", steps, loss,
                (fs::path(out) / "diffgait.ckpt").string().c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& skeletons, int steps, double eta,
               const std::string& out, std::uint64_t seed, const std::string& config_path,
               const std::string& limbs_path) {
    RunConfig cfg = config_path.empty() ? parse_config(R"({"schema":"zipgait-run-v1"})")
                                        : load_config(config_path);
    auto [meta0, n_params] = peek_checkpoint(ckpt);
    (void)n_params;
    const int C = static_cast<int>(meta0.extra_or("C", 64));
    const int T = static_cast<int>(meta0.extra_or("T", 1000));
    DiffGaitNet<float> net({C}, 0);
    load_checkpoint(net.params(), ckpt);

    const LimbTable limbs = load_limbs(limbs_path);
    const double sigma = cfg.num_or("sigma", 2.0);
    SkeletonSequence sk = load_skeleton_json(skeletons);
    Tensor<float> heat = heat_volume(sk, limbs, sigma);
    const int F = heat.dim(0);

    NoiseSchedule sched = cosine_schedule(T);
    Rng rng(seed);
    MultiLevelSilhouettes ml = sample_silhouettes(net, heat, sched, steps, eta, rng);
    FusionWeights w = fusion_weights_for(cfg, steps);
    Tensor<float> composite = stage_one_combine(ml, w);

    fs::create_directories(out);
    for (int lv = 0; lv < ml.steps(); ++lv) {
        char name[32];
        std::snprintf(name, sizeof name, "level_%d.npy", lv);
        save_npy((fs::path(out) / name).string(), ml.preds[static_cast<size_t>(lv)]);
    }
    save_npy((fs::path(out) / "composite.npy").string(), composite);
    for (int f = 0; f < F; ++f) {
        Tensor<float> img({kCanvasH, kCanvasW});
        std::copy_n(composite.data.begin() + static_cast<std::ptrdiff_t>(f) * img.numel(),
                    img.numel(), img.data.begin());
        char name[48];
        std::snprintf(name, sizeof name, "composite_f%03d.png", f);
        save_png_gray((fs::path(out) / name).string(), img);
    }
    nlohmann::json run;
    run["config"] = cfg.hash();
    run["steps"] = steps;
    run["eta"] = eta;
    run["seed"] = seed;
    std::ofstream((fs::path(out) / "run.json").string()) << run.dump(2) << "\n";
    std::printf("sampled %d frames at %d steps -> %s\n", F, steps, out.c_str());
    return 0;
}

struct PreparedSeq {
    Tensor<float> sil;   // stage-one composite [F,1,H,W]
    Tensor<float> heat;  // [F,2,H,W]
    std::string identity;
    std::string sequence;
    int label = 0;
};

std::vector<PreparedSeq> prepare_sequences(DiffGaitNet<float>& net, const NoiseSchedule& sched,
                                           const std::vector<LoadedSeq>& seqs,
                                           const LimbTable& limbs, double sigma, int steps,
                                           double eta, const FusionWeights& w,
                                           std::uint64_t seed) {
    std::vector<std::string> ids;
    for (const auto& s : seqs)
        if (std::find(ids.begin(), ids.end(), s.identity) == ids.end()) ids.push_back(s.identity);
    std::sort(ids.begin(), ids.end());

    std::vector<PreparedSeq> out;
    for (const auto& s : seqs) {
        PreparedSeq p;
        p.heat = heat_volume(s.skel, limbs, sigma);
        Rng rng(seed ^ fnv64(s.identity + "/" + s.sequence));
        p.sil = composite_for(net, p.heat, sched, steps, eta, w, rng);
        p.identity = s.identity;
        p.sequence = s.sequence;
        p.label = static_cast<int>(std::find(ids.begin(), ids.end(), s.identity) - ids.begin());
        out.push_back(std::move(p));
    }
    return out;
}

// Random clip of `len` frames from a prepared sequence.
SeqSample clip_of(const PreparedSeq& p, int len, Rng& rng) {
    const int F = p.sil.dim(0);
    const int use = std::min(len, F);
    const int start = F > use ? static_cast<int>(rng.uniform_int(0, F - use)) : 0;
    SeqSample s;
    s.sil = Tensor<float>({use, 1, kCanvasH, kCanvasW});
    s.heat = Tensor<float>({use, 2, kCanvasH, kCanvasW});
    const std::int64_t ps = static_cast<std::int64_t>(kCanvasH) * kCanvasW;
    std::copy_n(p.sil.data.begin() + start * ps, use * ps, s.sil.data.begin());
    std::copy_n(p.heat.data.begin() + start * 2 * ps, use * 2 * ps, s.heat.data.begin());
    s.label = p.label;
    return s;
}

// P identities x K sequences batch sampler.
std::vector<SeqSample> sample_batch(const std::vector<PreparedSeq>& pool, int pids, int kseqs,
                                    int clip_len, Rng& rng) {
    std::map<int, std::vector<int>> by_label;
    for (size_t i = 0; i < pool.size(); ++i) by_label[pool[i].label].push_back(static_cast<int>(i));
    std::vector<int> labels;
    for (const auto& [l, v] : by_label)
        if (static_cast<int>(v.size()) >= 1) labels.push_back(l);
    if (static_cast<int>(labels.size()) < 2) throw InvalidParameter("need >= 2 identities to train");

    // choose pids labels without replacement
    for (size_t i = labels.size(); i > 1; --i)
        std::swap(labels[i - 1], labels[rng.uniform_int(0, static_cast<std::uint64_t>(i - 1))]);
    const int np = std::min<int>(pids, static_cast<int>(labels.size()));

    std::vector<SeqSample> batch;
    for (int li = 0; li < np; ++li) {
        const auto& seqs = by_label[labels[static_cast<size_t>(li)]];
        for (int k = 0; k < kseqs; ++k) {
            const int si = seqs[rng.uniform_int(0, static_cast<std::uint64_t>(seqs.size() - 1))];
            batch.push_back(clip_of(pool[static_cast<size_t>(si)], clip_len, rng));
        }
    }
    return batch;
}

void save_combined_checkpoint(const DiffGaitNet<float>& dg, const Recognizer<float>& rec,
                              CheckpointMeta meta, const std::string& path) {
    nn::ParamStore<float> combined;
    for (const auto& e : dg.params().entries()) combined.add("dg." + e.name, e.value.shape) = e.value;
    for (const auto& e : rec.params().entries()) combined.add(e.name, e.value.shape) = e.value;
    const auto& rc = rec.config();
    meta.extra["cf"] = rc.cf;
    meta.extra["b1"] = rc.b1;
    meta.extra["b2"] = rc.b2;
    meta.extra["parts"] = rc.parts;
    meta.extra["dim"] = rc.dim;
    meta.extra["num_classes"] = rc.num_classes;
    save_checkpoint(combined, meta, path);
}

// Loads a combined checkpoint back into freshly built nets.
std::pair<DiffGaitNet<float>, Recognizer<float>> load_combined(const std::string& path,
                                                               CheckpointMeta& meta_out) {
    auto [meta, n] = peek_checkpoint(path);
    (void)n;
    DiffGaitConfig dc;
    dc.C = static_cast<int>(meta.extra_or("C", 64));
    RecognizerConfig rc;
    rc.cf = static_cast<int>(meta.extra_or("cf", rc.cf));
    rc.b1 = static_cast<int>(meta.extra_or("b1", rc.b1));
    rc.b2 = static_cast<int>(meta.extra_or("b2", rc.b2));
    rc.parts = static_cast<int>(meta.extra_or("parts", rc.parts));
    rc.dim = static_cast<int>(meta.extra_or("dim", rc.dim));
    rc.num_classes = static_cast<int>(meta.extra_or("num_classes", rc.num_classes));

    DiffGaitNet<float> dg(dc, 0);
    Recognizer<float> rec(rc, 0);
    nn::ParamStore<float> combined;
    for (const auto& e : dg.params().entries()) combined.add("dg." + e.name, e.value.shape);
    for (const auto& e : rec.params().entries()) combined.add(e.name, e.value.shape);
    meta_out = load_checkpoint(combined, path);
    for (auto& e : dg.params().entries()) e.value = combined.at("dg." + e.name).value;
    for (auto& e : rec.params().entries()) e.value = combined.at(e.name).value;
    return {std::move(dg), std::move(rec)};
}

int cmd_train_zipgait(const std::string& config_path, const std::string& data,
                      const std::string& diffgait_ckpt, const std::string& out, int steps,
                      std::uint64_t seed, double lr_flag) {
    RunConfig cfg = config_path.empty() ? parse_config(R"({"schema":"zipgait-run-v1"})")
                                        : load_config(config_path);
    auto [dmeta, np] = peek_checkpoint(diffgait_ckpt);
    (void)np;
    const int C = static_cast<int>(dmeta.extra_or("C", 64));
    const int T = static_cast<int>(dmeta.extra_or("T", 1000));
    DiffGaitNet<float> dg({C}, 0);
    load_checkpoint(dg.params(), diffgait_ckpt);

    const int sample_steps = static_cast<int>(cfg.num_or("sample_steps", 5));
    const double eta = cfg.num_or("eta", 0.0);
    const double sigma = cfg.num_or("sigma", 2.0);
    const int clip_len = static_cast<int>(cfg.num_or("clip_len", 4));
    const int batch_p = static_cast<int>(cfg.num_or("batch_p", 4));
    const int batch_k = static_cast<int>(cfg.num_or("batch_k", 2));
    ZipGaitTrainOptions opt;
    opt.lr = lr_flag > 0 ? lr_flag : cfg.num_or("zipgait_lr", 0.1);
    opt.momentum = cfg.num_or("momentum", 0.9);
    opt.weight_decay = cfg.num_or("weight_decay", 5e-4);

    const LimbTable limbs = coco17_limbs();
    NoiseSchedule sched = cosine_schedule(T);
    FusionWeights w = fusion_weights_for(cfg, sample_steps);

    std::vector<LoadedSeq> seqs = load_split(data, "train");
    std::vector<PreparedSeq> pool =
        prepare_sequences(dg, sched, seqs, limbs, sigma, sample_steps, eta, w, seed);
    int num_classes = 0;
    for (const auto& p : pool) num_classes = std::max(num_classes, p.label + 1);

    RecognizerConfig rc;
    rc.cf = static_cast<int>(cfg.num_or("cf", rc.cf));
    rc.num_classes = num_classes;
    rc.margin = cfg.num_or("margin", rc.margin);
    Recognizer<float> rec(rc, seed);

    fs::create_directories(out);
    std::ofstream csv((fs::path(out) / "train_zipgait.csv").string());
    csv << "step,loss,wall_ms\n# config " << cfg.hash() << "\n";

    Rng rng(seed ^ fnv64("zipgait"));
    const double t0 = now_ms();
    RecognitionLosses losses;
    for (int step = 1; step <= steps; ++step) {
        auto batch = sample_batch(pool, batch_p, batch_k, clip_len, rng);
        losses = rec.train_step(batch, opt);
        write_csv_row(csv, step, losses.total, now_ms() - t0);
    }

    CheckpointMeta meta;
    meta.config_hash = cfg.hash();
    meta.seed = seed;
    meta.step = steps;
    meta.extra = dmeta.extra;  // keeps C and T
    save_combined_checkpoint(dg, rec, meta, (fs::path(out) / "zipgait.ckpt").string());
    std::printf("trained %d steps, final loss %.6f (triplet %.4f, ce %.4f) -> %s\n", steps,
                losses.total, losses.triplet, losses.ce,
                (fs::path(out) / "zipgait.ckpt").string().c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out,
             const std::string& split, int probe_per_id, std::uint64_t seed,
             const std::string& config_path) {
    RunConfig cfg = config_path.empty() ? parse_config(R"({"schema":"zipgait-run-v1"})")
                                        : load_config(config_path);
    CheckpointMeta meta;
    auto [dg, rec] = load_combined(ckpt, meta);
    const int T = static_cast<int>(meta.extra_or("T", 1000));
    const int sample_steps = static_cast<int>(cfg.num_or("sample_steps", 5));
    const double eta = cfg.num_or("eta", 0.0);
    const double sigma = cfg.num_or("sigma", 2.0);

    const LimbTable limbs = coco17_limbs();
    NoiseSchedule sched = cosine_schedule(T);
    FusionWeights w = fusion_weights_for(cfg, sample_steps);

    std::vector<LoadedSeq> seqs = load_split(data, split);
    std::vector<PreparedSeq> pool =
        prepare_sequences(dg, sched, seqs, limbs, sigma, sample_steps, eta, w, seed);

    // Per identity, the last `probe_per_id` sequences (by name) are probes.
    std::map<std::string, std::vector<int>> by_id;
    for (size_t i = 0; i < pool.size(); ++i) by_id[pool[i].identity].push_back(static_cast<int>(i));
    std::vector<EmbeddingSet> gallery, probe;
    for (auto& [id, idxs] : by_id) {
        std::sort(idxs.begin(), idxs.end(), [&](int a, int b) {
            return pool[static_cast<size_t>(a)].sequence < pool[static_cast<size_t>(b)].sequence;
        });
        const int n = static_cast<int>(idxs.size());
        const int np = std::min(probe_per_id, n - 1 > 0 ? n - 1 : n);
        for (int k = 0; k < n; ++k) {
            const auto& p = pool[static_cast<size_t>(idxs[static_cast<size_t>(k)])];
            EmbeddingSet e = rec.embed_sequence(p.sil, p.heat);
            e.label = p.identity;
            e.view = p.sequence;
            (k >= n - np ? probe : gallery).push_back(std::move(e));
        }
    }
    RetrievalResult r = evaluate_retrieval(gallery, probe);

    fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
    nlohmann::json j;
    j["rank1"] = r.rank1;
    j["rank5"] = r.rank5;
    j["mAP"] = r.mAP;
    j["mINP"] = r.mINP;
    j["excluded_probes"] = r.excluded_probes;
    std::ofstream(out) << j.dump(2) << "\n";
    nlohmann::json run;
    run["config"] = cfg.hash();
    run["checkpoint_config"] = meta.config_hash;
    run["gallery"] = gallery.size();
    run["probe"] = probe.size();
    std::ofstream((fs::path(out).parent_path() / "eval_run.json").string()) << run.dump(2) << "\n";

    std::printf("gallery %zu  probe %zu\n", gallery.size(), probe.size());
    std::printf("rank1 %.4f  rank5 %.4f  mAP %.4f  mINP %.4f  excluded %d\n", r.rank1, r.rank5,
                r.mAP, r.mINP, r.excluded_probes);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heat-skeleton diffusion gait pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic walker dataset");
    int g_ids = 8, g_seqs = 8, g_frames = 30;
    std::uint64_t g_seed = 0;
    std::string g_out = "data";
    double g_frac = 1.0;
    gen->add_option("--identities", g_ids, "number of identities");
    gen->add_option("--seqs-per-id", g_seqs, "sequences per identity");
    gen->add_option("--frames", g_frames, "frames per sequence");
    gen->add_option("--seed", g_seed, "random seed");
    gen->add_option("--out", g_out, "output directory");
    gen->add_option("--train-fraction", g_frac, "identity-level train fraction");

    // train-diffgait
    auto* tdg = app.add_subcommand("train-diffgait", "train the silhouette reconstructor");
    std::string t_cfg, t_data, t_out = "run", t_resume, t_limbs;
    int t_steps = 100;
    std::uint64_t t_seed = 0;
    double t_lr = -1;
    tdg->add_option("--config", t_cfg, "run config JSON");
    tdg->add_option("--data", t_data, "manifest path")->required();
    tdg->add_option("--out", t_out, "output directory");
    tdg->add_option("--steps", t_steps, "optimization steps");
    tdg->add_option("--seed", t_seed, "random seed");
    tdg->add_option("--resume", t_resume, "checkpoint to resume from");
    tdg->add_option("--limbs", t_limbs, "limb table JSON");
    tdg->add_option("--lr", t_lr, "learning rate override");

    // sample
    auto* smp = app.add_subcommand("sample", "reconstruct silhouettes from skeletons");
    std::string s_ckpt, s_skel, s_out = "samples", s_cfg, s_limbs;
    int s_steps = 5;
    double s_eta = 0.0;
    std::uint64_t s_seed = 0;
    smp->add_option("--ckpt", s_ckpt, "checkpoint")->required();
    smp->add_option("--skeletons", s_skel, "skeleton sequence JSON")->required();
    smp->add_option("--steps", s_steps, "sampling steps");
    smp->add_option("--eta", s_eta, "stochasticity coefficient");
    smp->add_option("--out", s_out, "output directory");
    smp->add_option("--seed", s_seed, "random seed");
    smp->add_option("--config", s_cfg, "run config JSON");
    smp->add_option("--limbs", s_limbs, "limb table JSON");

    // train-zipgait
    auto* tzg = app.add_subcommand("train-zipgait", "train the recognizer end to end");
    std::string z_cfg, z_data, z_dg, z_out = "run";
    int z_steps = 200;
    std::uint64_t z_seed = 0;
    double z_lr = -1;
    tzg->add_option("--config", z_cfg, "run config JSON");
    tzg->add_option("--data", z_data, "manifest path")->required();
    tzg->add_option("--diffgait-ckpt", z_dg, "frozen reconstructor checkpoint")->required();
    tzg->add_option("--out", z_out, "output directory");
    tzg->add_option("--steps", z_steps, "optimization steps");
    tzg->add_option("--seed", z_seed, "random seed");
    tzg->add_option("--lr", z_lr, "learning rate override");

    // eval
    auto* ev = app.add_subcommand("eval", "retrieval evaluation");
    std::string e_ckpt, e_data, e_out = "metrics.json", e_cfg, e_split = "test";
    int e_ppid = 2;
    std::uint64_t e_seed = 0;
    ev->add_option("--ckpt", e_ckpt, "combined checkpoint")->required();
    ev->add_option("--data", e_data, "manifest path")->required();
    ev->add_option("--out", e_out, "metrics JSON path");
    ev->add_option("--split", e_split, "test | train | all");
    ev->add_option("--probe-per-id", e_ppid, "probe sequences per identity");
    ev->add_option("--seed", e_seed, "random seed");
    ev->add_option("--config", e_cfg, "run config JSON");

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_gen_data(g_ids, g_seqs, g_frames, g_seed, g_out, g_frac);
        if (*tdg)
            return cmd_train_diffgait(t_cfg, t_data, t_out, t_steps, t_seed, t_resume, t_limbs, t_lr);
        if (*smp) return cmd_sample(s_ckpt, s_skel, s_steps, s_eta, s_out, s_seed, s_cfg, s_limbs);
        if (*tzg) return cmd_train_zipgait(z_cfg, z_data, z_dg, z_out, z_steps, z_seed, z_lr);
        if (*ev) return cmd_eval(e_ckpt, e_data, e_out, e_split, e_ppid, e_seed, e_cfg);
    } catch (const CLI::ParseError& e) {
        const int r = app.exit(e);
        return r == 0 ? 0 : 1;
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return 3;
    } catch (const InvalidParameter& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
