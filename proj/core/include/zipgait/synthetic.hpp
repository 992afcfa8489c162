#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "zipgait/skeleton.hpp"
#include "zipgait/tensor.hpp"

namespace zipgait {

// Per-identity kinematic proportions of the articulated 2D walker.
// Lengths are fractions of the rendered body height.
struct FigureSpec {
    double head = 0.12;        // head top to neck
    double torso = 0.34;       // neck to pelvis
    double thigh = 0.28;       // pelvis to knee
    double shin = 0.26;        // knee to ankle
    double upper_arm = 0.16;
    double forearm = 0.14;
    double shoulder_offset = 0.02;  // sagittal depth offset, canvas px
    double hip_offset = 0.015;
    double gait_frequency = 0.05;   // cycles per frame, always 1/integer
    double stride_amplitude = 0.5;  // thigh swing amplitude, radians
    double arm_amplitude = 0.35;
    double limb_thickness = 2.4;    // capsule radius, canvas px
    std::uint64_t seed = 0;

    std::vector<double> length_vector() const {
        return {head, torso, thigh, shin, upper_arm, forearm};
    }
};

// Deterministic identity from a seed; distinct seeds give distinct
// proportion vectors with probability ~1.
FigureSpec generate_identity(std::uint64_t seed);

struct WalkerSequence {
    std::vector<SkeletonFrame> skeletons;  // normalized to the 64x44 canvas
    Tensor<float> silhouettes;             // [n,1,64,44] binary {0,1}
};

// Forward-kinematics walker with sinusoidal joint angles. The silhouette is
// a union of capsules along the limbs plus a head disc, rasterized without
// anti-aliasing; every joint lands inside the foreground. `variation` seeds
// a per-sequence phase offset so sequences of one identity differ.
WalkerSequence render_sequence(const FigureSpec& spec, int n_frames, std::uint64_t variation = 0);

}  // namespace zipgait
