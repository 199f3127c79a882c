#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lulc {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/blob shape or dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid convolution/pooling/crop geometry (non-exact tiling, non-square input, ...).
struct GeometryError : Error {
    using Error::Error;
};

/// Network spec validation or layer-surgery failure.
struct BuildError : Error {
    using Error::Error;
};

/// A name (layer, blob, class) does not exist.
struct LookupError : Error {
    using Error::Error;
};

/// Class label out of range or degenerate label set.
struct LabelError : Error {
    using Error::Error;
};

/// Invalid parameter value (ratios, fold count, angles, ...).
struct ParamError : Error {
    using Error::Error;
};

/// Filesystem-level failure (open/read/write).
struct IoError : Error {
    using Error::Error;
};

/// Malformed file contents (bad manifest, version mismatch, truncated blob, ...).
struct FormatError : Error {
    using Error::Error;
};

/// Training produced a non-finite value. Carries the last good iteration.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, std::int64_t last_good)
        : Error(what), last_good_iteration(last_good) {}
    std::int64_t last_good_iteration;
};

/// Filter-grid rendering precondition failure.
struct VizError : Error {
    using Error::Error;
};

}  // namespace lulc
