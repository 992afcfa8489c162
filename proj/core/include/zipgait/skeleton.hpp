#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "zipgait/tensor.hpp"

namespace zipgait {

inline constexpr int kNumJoints = 17;  // COCO-17 ordering
inline constexpr int kCanvasH = 64;
inline constexpr int kCanvasW = 44;

struct Joint {
    double x = 0.0;
    double y = 0.0;
    double c = 0.0;  // confidence in [0,1]; c == 0 means missing
};

struct SkeletonFrame {
    std::array<Joint, kNumJoints> joints;

    int visible_count() const {
        int n = 0;
        for (const auto& j : joints)
            if (j.c > 0.0) ++n;
        return n;
    }
};

struct SkeletonSequence {
    std::string id;   // identity label
    std::string seq;  // sequence name
    std::vector<SkeletonFrame> frames;
};

struct LimbTable {
    std::vector<std::pair<int, int>> edges;
};

// The canonical 19-edge COCO skeleton.
LimbTable coco17_limbs();

struct Canvas {
    int h = kCanvasH;
    int w = kCanvasW;
};

// 2-channel heatmap volume: channel 0 joints, channel 1 limbs. Shape [2,h,w].
using HeatSkeleton = Tensor<float>;

// Center the subject horizontally on the hip midpoint and scale so the
// vertical joint extent fills 90% of the canvas height. Idempotent.
SkeletonFrame normalize_frame(const SkeletonFrame& frame, Canvas canvas = {});

Tensor<float> render_joint_map(const SkeletonFrame& frame, double sigma, Canvas canvas = {});
Tensor<float> render_limb_map(const SkeletonFrame& frame, const LimbTable& limbs, double sigma,
                              Canvas canvas = {});

HeatSkeleton make_heat_skeleton(const SkeletonFrame& frame, const LimbTable& limbs,
                                double sigma = 2.0, Canvas canvas = {});

// Exact Euclidean distance from point p to segment [a,b].
double point_segment_distance(double px, double py, double ax, double ay, double bx, double by);

}  // namespace zipgait
