#include "zipgait/synthetic.hpp"

#include <cmath>

#include "zipgait/errors.hpp"
#include "zipgait/rng.hpp"

namespace zipgait {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// COCO-17 indices
enum : int {
    kNose = 0,
    kLEye = 1,
    kREye = 2,
    kLEar = 3,
    kREar = 4,
    kLShoulder = 5,
    kRShoulder = 6,
    kLElbow = 7,
    kRElbow = 8,
    kLWrist = 9,
    kRWrist = 10,
    kLHip = 11,
    kRHip = 12,
    kLKnee = 13,
    kRKnee = 14,
    kLAnkle = 15,
    kRAnkle = 16,
};

double in_range(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

struct Capsule {
    double ax, ay, bx, by, r;
};

}  // namespace

FigureSpec generate_identity(std::uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    FigureSpec s;
    s.head = in_range(rng, 0.10, 0.14);
    s.torso = in_range(rng, 0.30, 0.38);
    s.thigh = in_range(rng, 0.24, 0.32);
    s.shin = in_range(rng, 0.22, 0.30);
    s.upper_arm = in_range(rng, 0.14, 0.18);
    s.forearm = in_range(rng, 0.12, 0.16);
    s.shoulder_offset = in_range(rng, 0.8, 1.6);
    s.hip_offset = in_range(rng, 0.5, 1.2);
    // Integer period in frames so sequences are exactly periodic.
    const int period = static_cast<int>(rng.uniform_int(14, 28));
    s.gait_frequency = 1.0 / period;
    s.stride_amplitude = in_range(rng, 0.35, 0.65);
    s.arm_amplitude = in_range(rng, 0.25, 0.45);
    s.limb_thickness = in_range(rng, 2.0, 2.8);
    s.seed = seed;
    return s;
}

WalkerSequence render_sequence(const FigureSpec& spec, int n_frames, std::uint64_t variation) {
    if (n_frames < 1) throw InvalidParameter("render_sequence: n_frames >= 1");
    const int H = kCanvasH, W = kCanvasW;
    const double body_h = 0.9 * H;
    const double y0 = 0.05 * H;
    const double cx = 0.5 * W;

    // Normalize so head + torso + thigh + shin spans the body height.
    const double unit = body_h / (spec.head + spec.torso + spec.thigh + spec.shin);
    const double head_len = spec.head * unit;
    const double torso_len = spec.torso * unit;
    const double thigh_len = spec.thigh * unit;
    const double shin_len = spec.shin * unit;
    const double ua_len = spec.upper_arm * unit;
    const double fa_len = spec.forearm * unit;
    const double r_head = 0.55 * head_len;
    const double thick = spec.limb_thickness;

    Rng vr(variation * 0x9e3779b97f4a7c15ull + spec.seed + 1);
    const double phase0 = vr.uniform() * kTwoPi;

    WalkerSequence out;
    out.skeletons.resize(static_cast<size_t>(n_frames));
    out.silhouettes = Tensor<float>({n_frames, 1, H, W}, 0.0f);

    for (int f = 0; f < n_frames; ++f) {
        const double phase = kTwoPi * spec.gait_frequency * f + phase0;
        const double bob = 0.01 * body_h * std::sin(2.0 * phase);

        const double neck_y = y0 + head_len;
        const double pelvis_y = neck_y + torso_len + bob;
        const double hx = cx;
        const double hcx = cx + 0.5;  // slight forward head lean
        const double hcy = y0 + 0.5 * head_len;

        SkeletonFrame sk;
        auto set = [&sk](int idx, double x, double y) {
            sk.joints[static_cast<size_t>(idx)] = {x, y, 1.0};
        };
        set(kNose, hcx + 0.45 * r_head, hcy + 0.1 * r_head);
        set(kLEye, hcx + 0.25 * r_head, hcy - 0.3 * r_head);
        set(kREye, hcx - 0.25 * r_head, hcy - 0.3 * r_head);
        set(kLEar, hcx + 0.45 * r_head, hcy);
        set(kREar, hcx - 0.45 * r_head, hcy);

        const double shl_x = hx + spec.shoulder_offset;
        const double shr_x = hx - spec.shoulder_offset;
        set(kLShoulder, shl_x, neck_y);
        set(kRShoulder, shr_x, neck_y);

        // Legs: thigh swing from vertical, knee bend always backwards.
        const double amp = spec.stride_amplitude;
        auto leg = [&](double ph, double hip_x, int knee_i, int ankle_i) {
            const double th = amp * std::sin(ph);
            const double bend = 0.3 * amp * (1.0 - std::cos(ph));
            const double kx = hip_x + thigh_len * std::sin(th);
            const double ky = pelvis_y + thigh_len * std::cos(th);
            const double ax = kx + shin_len * std::sin(th - bend);
            const double ay = ky + shin_len * std::cos(th - bend);
            set(knee_i, kx, ky);
            set(ankle_i, ax, ay);
        };
        set(kLHip, hx + spec.hip_offset, pelvis_y);
        set(kRHip, hx - spec.hip_offset, pelvis_y);
        leg(phase, hx + spec.hip_offset, kLKnee, kLAnkle);
        leg(phase + kTwoPi / 2.0, hx - spec.hip_offset, kRKnee, kRAnkle);

        // Arms swing opposite to the same-side leg.
        auto arm = [&](double ph, double sh_x, int elbow_i, int wrist_i) {
            const double th = spec.arm_amplitude * std::sin(ph);
            const double ex = sh_x + ua_len * std::sin(th);
            const double ey = neck_y + ua_len * std::cos(th);
            const double wx = ex + fa_len * std::sin(th + 0.3);
            const double wy = ey + fa_len * std::cos(th + 0.3);
            set(elbow_i, ex, ey);
            set(wrist_i, wx, wy);
        };
        arm(phase + kTwoPi / 2.0, shl_x, kLElbow, kLWrist);
        arm(phase, shr_x, kRElbow, kRWrist);

        // Re-normalize exactly the way normalize_frame does (hip-centered,
        // 90% height) and rasterize in that frame, so heat-skeletons and
        // ground-truth silhouettes stay aligned.
        double ymin = sk.joints[0].y, ymax = sk.joints[0].y;
        for (const auto& j : sk.joints) {
            ymin = std::min(ymin, j.y);
            ymax = std::max(ymax, j.y);
        }
        const double hip_mid = 0.5 * (sk.joints[kLHip].x + sk.joints[kRHip].x);
        const double scale = 0.9 * H / (ymax - ymin);
        auto tx = [&](double x) { return (x - hip_mid) * scale + 0.5 * W; };
        auto ty = [&](double y) { return (y - ymin) * scale + 0.05 * H; };
        for (auto& j : sk.joints) {
            j.x = tx(j.x);
            j.y = ty(j.y);
        }
        out.skeletons[static_cast<size_t>(f)] = sk;

        // Silhouette: capsules along limbs + a head disc.
        const double thick_n = thick * scale;
        std::vector<Capsule> caps;
        auto seg = [&](int a, int b, double r) {
            const auto& ja = sk.joints[static_cast<size_t>(a)];
            const auto& jb = sk.joints[static_cast<size_t>(b)];
            caps.push_back({ja.x, ja.y, jb.x, jb.y, r});
        };
        caps.push_back({tx(hcx), ty(hcy), tx(hcx), ty(hcy), r_head * scale});
        caps.push_back({tx(hcx), ty(hcy), tx(hx), ty(neck_y), thick_n});            // neck
        caps.push_back({tx(hx), ty(neck_y), tx(hx), ty(pelvis_y), 1.8 * thick_n});  // torso
        seg(kLHip, kLKnee, thick_n);
        seg(kLKnee, kLAnkle, thick_n);
        seg(kRHip, kRKnee, thick_n);
        seg(kRKnee, kRAnkle, thick_n);
        seg(kLShoulder, kLElbow, 0.8 * thick_n);
        seg(kLElbow, kLWrist, 0.8 * thick_n);
        seg(kRShoulder, kRElbow, 0.8 * thick_n);
        seg(kRElbow, kRWrist, 0.8 * thick_n);

        float* img = out.silhouettes.ptr() + static_cast<size_t>(f) * H * W;
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                for (const auto& cp : caps) {
                    if (point_segment_distance(c, r, cp.ax, cp.ay, cp.bx, cp.by) <= cp.r) {
                        img[static_cast<size_t>(r) * W + c] = 1.0f;
                        break;
                    }
                }
            }
    }
    return out;
}

}  // namespace zipgait
