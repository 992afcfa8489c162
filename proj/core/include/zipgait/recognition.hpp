#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "zipgait/errors.hpp"
#include "zipgait/nn/params.hpp"
#include "zipgait/nn/tape.hpp"
#include "zipgait/pgi.hpp"
#include "zipgait/rng.hpp"

namespace zipgait {

// Per-sequence part embeddings: parts [P,D].
struct EmbeddingSet {
    Tensor<float> parts;
    std::string label;
    std::string view;
};

struct RetrievalResult {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double mAP = 0.0;
    double mINP = 0.0;
    int excluded_probes = 0;
};

// Sum over parts of per-part Euclidean distances between two [P,D] sets.
double embedding_distance(const Tensor<float>& a, const Tensor<float>& b);

// CMC Rank-1/5, mAP and mINP, averaged per probe. Probes whose identity is
// absent from the gallery are excluded and tallied. Ties break by gallery
// index (stable sort).
RetrievalResult evaluate_retrieval(const std::vector<EmbeddingSet>& gallery,
                                   const std::vector<EmbeddingSet>& probe);

// Plain hinge triplet loss on three embedding sets: mean over parts of
// max(d(a,p) - d(a,n) + m, 0) with per-part Euclidean distances.
double triplet_loss(const EmbeddingSet& anchor, const EmbeddingSet& pos, const EmbeddingSet& neg,
                    double margin);

// Softmax cross-entropy of one logit row.
double ce_loss(const std::vector<double>& logits, int label);

// Batch-hard mining on a [B,B] distance matrix: per anchor, the farthest
// same-label sample and the nearest different-label sample. -1 where no
// candidate exists.
struct MiningResult {
    std::vector<int> pos;
    std::vector<int> neg;
};
MiningResult mine_batch_hard(const Tensor<float>& dist, const std::vector<int>& labels);

struct RecognizerConfig {
    int cf = 16;       // PGI fused channels
    int b1 = 32;       // backbone widths
    int b2 = 64;
    int parts = 16;    // horizontal strips
    int dim = 64;      // per-part embedding size
    int num_classes = 8;
    double margin = 0.2;
    int h = 64;
    int w = 44;
};

// One training/eval sequence after DiffGait reconstruction: the stage-one
// composite silhouette plus the heat-skeleton, frame-aligned.
struct SeqSample {
    Tensor<float> sil;   // [F,1,h,w] in [0,1]
    Tensor<float> heat;  // [F,2,h,w]
    int label = 0;
};

struct RecognitionLosses {
    double triplet = 0.0;
    double ce = 0.0;
    double total = 0.0;
};

struct ZipGaitTrainOptions {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

template <typename T>
class Recognizer {
  public:
    using Val = nn::Val<T>;
    using Tape = nn::Tape<T>;

    explicit Recognizer(RecognizerConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
        Rng rng(seed);
        PgiFusion<T>::register_params(params_, cfg_.cf, rng);
        register_backbone(rng);
    }

    const RecognizerConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }

    // One sequence -> [1,b2,16,11] after PGI, backbone and temporal max.
    Val sequence_feature(Tape& tp, Val sil, Val heat, bool train) {
        auto fused = PgiFusion<T>::fuse(tp, params_, sil, heat, train).h;
        auto x = conv_gn_relu(tp, "bb.s1", fused, 2, train);
        x = res_block(tp, "bb.s2", x, train);
        x = conv_gn_relu(tp, "bb.s3", x, 2, train);
        x = res_block(tp, "bb.s4", x, train);
        return nn::reduce_max_batch(tp, x);
    }

    // Batch of per-sequence features -> part embeddings [B,P,D].
    Val embed_features(Tape& tp, const std::vector<Val>& feats, bool train) {
        auto x = nn::stack_batch(tp, feats);
        if (tp.val(x).dim(2) != cfg_.parts)
            throw ShapeError("backbone height does not match part count");
        auto pooled = nn::strip_pool(tp, x);  // [B,P,b2]
        return nn::part_linear(tp, pooled, p(tp, "head.proj.w", train), p(tp, "head.proj.b", train));
    }

    Val logits(Tape& tp, Val emb, bool train) {
        return nn::part_linear(tp, emb, p(tp, "head.cls.w", train), p(tp, "head.cls.b", train));
    }

    // Inference path for a single sequence.
    EmbeddingSet embed_sequence(const Tensor<T>& sil, const Tensor<T>& heat) {
        if (sil.shape.size() != 4 || sil.dim(0) < 1) throw InvalidParameter("empty sequence");
        Tape tp;
        auto s = tp.input(sil);
        auto h = tp.input(heat);
        auto f = sequence_feature(tp, s, h, false);
        auto emb = embed_features(tp, {f}, false);
        const Tensor<T>& e = tp.val(emb);
        EmbeddingSet out;
        out.parts = Tensor<float>({cfg_.parts, cfg_.dim});
        for (std::int64_t i = 0; i < out.parts.numel(); ++i)
            out.parts.data[static_cast<size_t>(i)] = static_cast<float>(e.data[static_cast<size_t>(i)]);
        return out;
    }

    // Joint triplet + CE step with SGD momentum. DiffGait is upstream and
    // untouched; only recognizer (and PGI) parameters move.
    RecognitionLosses train_step(const std::vector<SeqSample>& batch,
                                 const ZipGaitTrainOptions& opt) {
        if (batch.size() < 2) throw InvalidParameter("train_step needs >= 2 sequences");
        Tape tp;
        std::vector<Val> feats;
        std::vector<int> labels;
        for (const auto& s : batch) {
            auto sv = tp.input(s.sil.template cast<T>());
            auto hv = tp.input(s.heat.template cast<T>());
            feats.push_back(sequence_feature(tp, sv, hv, true));
            labels.push_back(s.label);
        }
        auto emb = embed_features(tp, feats, true);
        auto ltri = triplet_batch_hard_graph(tp, emb, labels, T(cfg_.margin));
        auto lce = nn::ce_loss_mean(tp, logits(tp, emb, true), labels);
        auto total = nn::add(tp, ltri, lce);

        RecognitionLosses out;
        out.triplet = static_cast<double>(tp.val(ltri).data[0]);
        out.ce = static_cast<double>(tp.val(lce).data[0]);
        out.total = out.triplet + out.ce;
        if (!std::isfinite(out.total)) throw TrainingDiverged("non-finite recognition loss");

        params_.zero_grad();
        tp.backward(total);
        params_.sgd_step(opt.lr, opt.momentum, opt.weight_decay);
        return out;
    }

    // Differentiable batch-hard triplet loss over emb [B,P,D].
    static Val triplet_batch_hard_graph(Tape& tp, Val emb, const std::vector<int>& labels,
                                        T margin) {
        const Tensor<T>& ev = tp.val(emb);
        if (ev.shape.size() != 3) throw ShapeError("triplet wants [B,P,D]");
        const int B = ev.dim(0), P = ev.dim(1), D = ev.dim(2);
        if (static_cast<int>(labels.size()) != B) throw ShapeError("triplet label count");

        // Per-part distances and their part-sums.
        auto dpart = std::make_shared<Tensor<T>>(Tensor<T>({B, B, P}));
        Tensor<float> dsum({B, B}, 0.0f);
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < B; ++j)
                for (int pp = 0; pp < P; ++pp) {
                    double s = 0;
                    const T* a = ev.ptr() + (static_cast<size_t>(i) * P + pp) * D;
                    const T* b = ev.ptr() + (static_cast<size_t>(j) * P + pp) * D;
                    for (int d = 0; d < D; ++d) {
                        const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
                        s += diff * diff;
                    }
                    const T dv = static_cast<T>(std::sqrt(s));
                    dpart->data[(static_cast<size_t>(i) * B + j) * P + pp] = dv;
                    dsum.data[static_cast<size_t>(i) * B + j] += static_cast<float>(dv);
                }

        auto mining = std::make_shared<MiningResult>(mine_batch_hard(dsum, labels));
        double loss = 0;
        int terms = 0;
        for (int i = 0; i < B; ++i) {
            if (mining->pos[static_cast<size_t>(i)] < 0 || mining->neg[static_cast<size_t>(i)] < 0)
                continue;
            for (int pp = 0; pp < P; ++pp) {
                const double dap = static_cast<double>(
                    dpart->data[(static_cast<size_t>(i) * B + mining->pos[static_cast<size_t>(i)]) * P + pp]);
                const double dan = static_cast<double>(
                    dpart->data[(static_cast<size_t>(i) * B + mining->neg[static_cast<size_t>(i)]) * P + pp]);
                loss += std::max(dap - dan + static_cast<double>(margin), 0.0);
                ++terms;
            }
        }
        Tensor<T> lv({1});
        lv.data[0] = terms > 0 ? static_cast<T>(loss / terms) : T(0);
        const bool ng = tp.needs_grad(emb) && terms > 0;
        auto y = tp.make(std::move(lv), tp.needs_grad(emb));
        if (ng) {
            const int nterms = terms;
            tp.set_back(y, [emb, y, mining, dpart, B, P, D, margin, nterms](Tape& t) {
                const T g = t.grad(y).data[0];
                const Tensor<T>& e = t.val(emb);
                Tensor<T>& ge = t.grad(emb);
                const T scale = g / static_cast<T>(nterms);
                auto pull = [&](int i, int j, int pp, T c) {
                    // d d(i,j)/d e_i = (e_i - e_j)/d ; opposite sign for e_j
                    const T dv = dpart->data[(static_cast<size_t>(i) * B + j) * P + pp];
                    if (dv <= T(0)) return;
                    const T* a = e.ptr() + (static_cast<size_t>(i) * P + pp) * D;
                    const T* b = e.ptr() + (static_cast<size_t>(j) * P + pp) * D;
                    T* gi = ge.ptr() + (static_cast<size_t>(i) * P + pp) * D;
                    T* gj = ge.ptr() + (static_cast<size_t>(j) * P + pp) * D;
                    const T f = c / dv;
                    for (int d = 0; d < D; ++d) {
                        const T diff = a[d] - b[d];
                        gi[d] += f * diff;
                        gj[d] -= f * diff;
                    }
                };
                for (int i = 0; i < B; ++i) {
                    const int hp = mining->pos[static_cast<size_t>(i)];
                    const int hn = mining->neg[static_cast<size_t>(i)];
                    if (hp < 0 || hn < 0) continue;
                    for (int pp = 0; pp < P; ++pp) {
                        const T dap = dpart->data[(static_cast<size_t>(i) * B + hp) * P + pp];
                        const T dan = dpart->data[(static_cast<size_t>(i) * B + hn) * P + pp];
                        if (dap - dan + margin <= T(0)) continue;
                        pull(i, hp, pp, scale);
                        pull(i, hn, pp, -scale);
                    }
                }
            });
        }
        return y;
    }

  private:
    Val p(Tape& tp, const std::string& name, bool train) {
        auto& e = params_.at(name);
        return train ? tp.param(e) : tp.frozen_value(e.value);
    }

    Val conv_gn_relu(Tape& tp, const std::string& base, Val x, int stride, bool train) {
        auto y = nn::conv2d(tp, x, p(tp, base + ".w", train), p(tp, base + ".b", train), stride, 1);
        y = nn::group_norm(tp, y, p(tp, base + ".g", train), p(tp, base + ".be", train),
                           norm_groups(tp.val(y).dim(1)));
        return nn::relu(tp, y);
    }

    Val res_block(Tape& tp, const std::string& base, Val x, bool train) {
        auto y = conv_gn_relu(tp, base + ".a", x, 1, train);
        y = nn::conv2d(tp, y, p(tp, base + ".b.w", train), p(tp, base + ".b.b", train), 1, 1);
        y = nn::group_norm(tp, y, p(tp, base + ".b.g", train), p(tp, base + ".b.be", train),
                           norm_groups(tp.val(y).dim(1)));
        return nn::relu(tp, nn::add(tp, x, y));
    }

    void add_conv(const std::string& base, int cin, int cout, Rng& rng, bool gn = true) {
        auto& w = params_.add(base + ".w", {cout, cin, 3, 3});
        nn::init_he(w, static_cast<std::int64_t>(cin) * 9, rng);
        params_.add(base + ".b", {cout});
        if (gn) {
            params_.add(base + ".g", {cout}).fill(T(1));
            params_.add(base + ".be", {cout});
        }
    }

    void register_backbone(Rng& rng) {
        add_conv("bb.s1", cfg_.cf, cfg_.b1, rng);
        add_conv("bb.s2.a", cfg_.b1, cfg_.b1, rng);
        add_conv("bb.s2.b", cfg_.b1, cfg_.b1, rng);
        add_conv("bb.s3", cfg_.b1, cfg_.b2, rng);
        add_conv("bb.s4.a", cfg_.b2, cfg_.b2, rng);
        add_conv("bb.s4.b", cfg_.b2, cfg_.b2, rng);
        auto& pw = params_.add("head.proj.w", {cfg_.parts, cfg_.dim, cfg_.b2});
        nn::init_he(pw, cfg_.b2, rng);
        params_.add("head.proj.b", {cfg_.parts, cfg_.dim});
        auto& cw = params_.add("head.cls.w", {cfg_.parts, cfg_.num_classes, cfg_.dim});
        nn::init_he(cw, cfg_.dim, rng);
        params_.add("head.cls.b", {cfg_.parts, cfg_.num_classes});
    }

    RecognizerConfig cfg_;
    nn::ParamStore<T> params_;
};

}  // namespace zipgait
