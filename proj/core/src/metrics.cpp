#include <algorithm>
#include <cmath>
#include <numeric>

#include "zipgait/recognition.hpp"

namespace zipgait {

double embedding_distance(const Tensor<float>& a, const Tensor<float>& b) {
    if (!a.same_shape(b) || a.shape.size() != 2) throw ShapeError("embedding_distance: [P,D] pair");
    const int P = a.dim(0), D = a.dim(1);
    double total = 0;
    for (int p = 0; p < P; ++p) {
        double s = 0;
        for (int d = 0; d < D; ++d) {
            const double diff = static_cast<double>(a.data[static_cast<size_t>(p) * D + d]) -
                                static_cast<double>(b.data[static_cast<size_t>(p) * D + d]);
            s += diff * diff;
        }
        total += std::sqrt(s);
    }
    return total;
}

RetrievalResult evaluate_retrieval(const std::vector<EmbeddingSet>& gallery,
                                   const std::vector<EmbeddingSet>& probe) {
    if (gallery.empty()) throw InvalidParameter("evaluate_retrieval: empty gallery");
    RetrievalResult res;
    int used = 0;
    for (const auto& q : probe) {
        bool present = false;
        for (const auto& g : gallery)
            if (g.label == q.label) present = true;
        if (!present) {
            ++res.excluded_probes;
            continue;
        }
        std::vector<int> order(gallery.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> dist(gallery.size());
        for (size_t i = 0; i < gallery.size(); ++i)
            dist[i] = embedding_distance(q.parts, gallery[i].parts);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return dist[static_cast<size_t>(a)] < dist[static_cast<size_t>(b)]; });

        int num_rel = 0, seen_rel = 0, hardest_rank = 0;
        double ap = 0;
        bool hit1 = false, hit5 = false;
        for (size_t k = 0; k < order.size(); ++k) {
            const bool rel = gallery[static_cast<size_t>(order[k])].label == q.label;
            if (rel) {
                ++num_rel;
                ++seen_rel;
                ap += static_cast<double>(seen_rel) / static_cast<double>(k + 1);
                hardest_rank = static_cast<int>(k + 1);
                if (k < 1) hit1 = true;
                if (k < 5) hit5 = true;
            }
        }
        res.rank1 += hit1 ? 1.0 : 0.0;
        res.rank5 += hit5 ? 1.0 : 0.0;
        res.mAP += ap / num_rel;
        res.mINP += static_cast<double>(num_rel) / hardest_rank;
        ++used;
    }
    if (used > 0) {
        res.rank1 /= used;
        res.rank5 /= used;
        res.mAP /= used;
        res.mINP /= used;
    }
    return res;
}

double triplet_loss(const EmbeddingSet& anchor, const EmbeddingSet& pos, const EmbeddingSet& neg,
                    double margin) {
    if (!anchor.parts.same_shape(pos.parts) || !anchor.parts.same_shape(neg.parts))
        throw ShapeError("triplet_loss: shape mismatch");
    const int P = anchor.parts.dim(0), D = anchor.parts.dim(1);
    double total = 0;
    for (int p = 0; p < P; ++p) {
        double dap = 0, dan = 0;
        for (int d = 0; d < D; ++d) {
            const size_t k = static_cast<size_t>(p) * D + d;
            const double ap = anchor.parts.data[k] - pos.parts.data[k];
            const double an = anchor.parts.data[k] - neg.parts.data[k];
            dap += ap * ap;
            dan += an * an;
        }
        total += std::max(std::sqrt(dap) - std::sqrt(dan) + margin, 0.0);
    }
    return total / P;
}

double ce_loss(const std::vector<double>& logits, int label) {
    if (logits.size() < 2) throw InvalidParameter("ce_loss needs n >= 2");
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw InvalidParameter("ce_loss: label out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0;
    for (double v : logits) lse += std::exp(v - mx);
    return mx + std::log(lse) - logits[static_cast<size_t>(label)];
}

MiningResult mine_batch_hard(const Tensor<float>& dist, const std::vector<int>& labels) {
    const int B = dist.dim(0);
    if (dist.shape.size() != 2 || dist.dim(1) != B || static_cast<int>(labels.size()) != B)
        throw ShapeError("mine_batch_hard: [B,B] distances + B labels");
    MiningResult res;
    res.pos.assign(static_cast<size_t>(B), -1);
    res.neg.assign(static_cast<size_t>(B), -1);
    for (int i = 0; i < B; ++i) {
        float worst_pos = -1.0f, best_neg = 0.0f;
        for (int j = 0; j < B; ++j) {
            if (j == i) continue;
            const float d = dist.data[static_cast<size_t>(i) * B + j];
            if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)]) {
                if (res.pos[static_cast<size_t>(i)] < 0 || d > worst_pos) {
                    worst_pos = d;
                    res.pos[static_cast<size_t>(i)] = j;
                }
            } else {
                if (res.neg[static_cast<size_t>(i)] < 0 || d < best_neg) {
                    best_neg = d;
                    res.neg[static_cast<size_t>(i)] = j;
                }
            }
        }
    }
    return res;
}

}  // namespace zipgait
