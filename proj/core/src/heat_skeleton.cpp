#include "zipgait/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zipgait/errors.hpp"

namespace zipgait {

LimbTable coco17_limbs() {
    return LimbTable{{{15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12},
                      {5, 6},   {5, 7},   {6, 8},   {7, 9},   {8, 10},  {1, 2},  {0, 1},
                      {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6}}};
}

namespace {

void check_frame(const SkeletonFrame& f) {
    for (const auto& j : f.joints) {
        if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.c))
            throw InvalidParameter("non-finite joint in skeleton frame");
        if (j.c < 0.0 || j.c > 1.0) throw InvalidParameter("joint confidence outside [0,1]");
    }
}

constexpr int kHipL = 11;
constexpr int kHipR = 12;

}  // namespace

SkeletonFrame normalize_frame(const SkeletonFrame& frame, Canvas canvas) {
    check_frame(frame);
    if (frame.visible_count() < 2) throw DegenerateSkeleton("fewer than 2 visible joints");

    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -std::numeric_limits<double>::infinity();
    double xsum = 0.0;
    int n = 0;
    for (const auto& j : frame.joints) {
        if (j.c <= 0.0) continue;
        ymin = std::min(ymin, j.y);
        ymax = std::max(ymax, j.y);
        xsum += j.x;
        ++n;
    }
    const double extent = ymax - ymin;
    if (extent <= 0.0) throw DegenerateSkeleton("zero vertical extent");

    // Horizontal anchor: hip midpoint when both hips are visible, else the
    // centroid of visible joints.
    double cx;
    const auto& hl = frame.joints[kHipL];
    const auto& hr = frame.joints[kHipR];
    if (hl.c > 0.0 && hr.c > 0.0)
        cx = 0.5 * (hl.x + hr.x);
    else
        cx = xsum / n;

    const double scale = 0.9 * canvas.h / extent;
    const double ytop = 0.05 * canvas.h;

    SkeletonFrame out = frame;
    for (auto& j : out.joints) {
        j.x = (j.x - cx) * scale + 0.5 * canvas.w;
        j.y = (j.y - ymin) * scale + ytop;
    }
    return out;
}

Tensor<float> render_joint_map(const SkeletonFrame& frame, double sigma, Canvas canvas) {
    if (!(sigma > 0.0)) throw InvalidParameter("sigma must be > 0");
    check_frame(frame);
    Tensor<float> map({canvas.h, canvas.w}, 0.0f);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (const auto& j : frame.joints) {
        if (j.c <= 0.0) continue;
        for (int r = 0; r < canvas.h; ++r) {
            const double dy = r - j.y;
            float* row = map.ptr() + static_cast<size_t>(r) * canvas.w;
            for (int c = 0; c < canvas.w; ++c) {
                const double dx = c - j.x;
                const double v = std::exp(-(dx * dx + dy * dy) * inv) * j.c;
                if (v > row[c]) row[c] = static_cast<float>(v);
            }
        }
    }
    return map;
}

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

Tensor<float> render_limb_map(const SkeletonFrame& frame, const LimbTable& limbs, double sigma,
                              Canvas canvas) {
    if (!(sigma > 0.0)) throw InvalidParameter("sigma must be > 0");
    check_frame(frame);
    for (const auto& [a, b] : limbs.edges)
        if (a < 0 || a >= kNumJoints || b < 0 || b >= kNumJoints || a == b)
            throw InvalidParameter("bad limb edge");

    Tensor<float> map({canvas.h, canvas.w}, 0.0f);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (const auto& [a, b] : limbs.edges) {
        const auto& ja = frame.joints[static_cast<size_t>(a)];
        const auto& jb = frame.joints[static_cast<size_t>(b)];
        if (ja.c <= 0.0 || jb.c <= 0.0) continue;  // limb with a missing endpoint
        const double conf = std::min(ja.c, jb.c);
        for (int r = 0; r < canvas.h; ++r) {
            float* row = map.ptr() + static_cast<size_t>(r) * canvas.w;
            for (int c = 0; c < canvas.w; ++c) {
                const double d = point_segment_distance(c, r, ja.x, ja.y, jb.x, jb.y);
                const double v = std::exp(-d * d * inv) * conf;
                if (v > row[c]) row[c] = static_cast<float>(v);
            }
        }
    }
    return map;
}

HeatSkeleton make_heat_skeleton(const SkeletonFrame& frame, const LimbTable& limbs, double sigma,
                                Canvas canvas) {
    const SkeletonFrame norm = normalize_frame(frame, canvas);
    Tensor<float> jm = render_joint_map(norm, sigma, canvas);
    Tensor<float> lm = render_limb_map(norm, limbs, sigma, canvas);
    HeatSkeleton out({2, canvas.h, canvas.w});
    std::copy(jm.data.begin(), jm.data.end(), out.data.begin());
    std::copy(lm.data.begin(), lm.data.end(), out.data.begin() + jm.numel());
    return out;
}

}  // namespace zipgait
