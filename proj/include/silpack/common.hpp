#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace silpack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Error hierarchy. InputError and its subclasses map to CLI exit code 2,
// NumericalError to exit code 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class MeshError : public InputError {
public:
    using InputError::InputError;
};

class ParameterError : public InputError {
public:
    using InputError::InputError;
};

class DimensionError : public InputError {
public:
    using InputError::InputError;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Worker count from SILPACK_THREADS, defaulting to the hardware concurrency.
std::size_t thread_count();

// Runs body(chunk) for chunk in [0, n_chunks). Chunks may execute
// concurrently; callers write per-chunk results and reduce them in chunk
// order so results do not depend on the worker count.
void parallel_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& body);

}  // namespace silpack
