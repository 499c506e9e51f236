#pragma once

#include <stdexcept>
#include <string>

namespace curvepose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cylinder/label parameters that cannot describe a physical wrap.
class InvalidModelError : public Error {
public:
    using Error::Error;
};

class BehindCameraError : public Error {
public:
    using Error::Error;
};

/// Tensor, matrix or list sizes that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad user configuration (CLI flags, scene distribution, net config).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File-system or serialization failure. The message names the offending file.
class IoError : public Error {
public:
    using Error::Error;
};

/// Linear system without a unique solution (too few or degenerate points).
class DegenerateError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// No target was recognised in the image.
class NoDetectionError : public Error {
public:
    using Error::Error;
};

/// Not enough consistent correspondences to recover a pose.
class NoPoseError : public Error {
public:
    using Error::Error;
};

}  // namespace curvepose
