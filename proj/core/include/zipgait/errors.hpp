#pragma once

#include <stdexcept>
#include <string>

namespace zipgait {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A skeleton frame with too few visible joints (or zero spatial extent)
// cannot be normalized onto the canvas.
struct DegenerateSkeleton : Error {
    using Error::Error;
};

struct InvalidParameter : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

// recover_noise with alpha_bar numerically equal to 1.
struct DivisionGuard : Error {
    using Error::Error;
};

// eta too large for a given DDIM step pair: 1 - alpha_bar_next - sigma^2 < 0.
struct SigmaOverflow : Error {
    using Error::Error;
};

struct TrainingDiverged : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct AlignmentError : Error {
    using Error::Error;
};

struct IncompatibleCheckpoint : Error {
    using Error::Error;
};

}  // namespace zipgait
