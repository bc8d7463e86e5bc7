#pragma once

#include <stdexcept>
#include <string>

namespace loadlens {

/// Base class for all loadlens errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input or configuration violated a documented precondition.
/// CLI maps these to exit code 2.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// Failure while carrying out an otherwise valid request (I/O,
/// missing checkpoint, diverged training). CLI maps these to exit code 3.
class ExecutionError : public Error {
public:
    explicit ExecutionError(const std::string& msg) : Error(msg) {}
};

// --- dataset ---

class MissingColumnError : public ValidationError {
public:
    explicit MissingColumnError(const std::string& column)
        : ValidationError("missing column: " + column) {}
};

class NonUniformTimestampsError : public ValidationError {
public:
    NonUniformTimestampsError(const std::string& column, std::size_t row)
        : ValidationError("non-uniform timestamps in column '" + column +
                          "' at data row " + std::to_string(row)) {}
};

class NonNumericCellError : public ValidationError {
public:
    NonNumericCellError(const std::string& column, std::size_t row, const std::string& cell)
        : ValidationError("non-numeric cell in column '" + column + "' at data row " +
                          std::to_string(row) + ": '" + cell + "'") {}
};

class ZeroVarianceError : public ValidationError {
public:
    explicit ZeroVarianceError(const std::string& column)
        : ValidationError("zero variance in column '" + column + "': cannot standardize") {}
};

class DatasetTooSmallError : public ValidationError {
public:
    DatasetTooSmallError(std::size_t length, std::size_t minimum)
        : ValidationError("dataset too small: length " + std::to_string(length) +
                          ", need at least " + std::to_string(minimum)) {}
};

class SeriesTooShortError : public ValidationError {
public:
    SeriesTooShortError(std::size_t length, std::size_t needed)
        : ValidationError("series too short: length " + std::to_string(length) +
                          ", need at least " + std::to_string(needed)) {}
};

// --- similarity ---

class ZeroVectorError : public ValidationError {
public:
    ZeroVectorError() : ValidationError("cosine similarity of an all-zero vector is undefined") {}
};

class LengthMismatchError : public ValidationError {
public:
    LengthMismatchError(std::size_t a, std::size_t b)
        : ValidationError("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class NotEnoughPeaksError : public ValidationError {
public:
    NotEnoughPeaksError(std::size_t found, std::size_t requested)
        : ValidationError("not enough peaks: found " + std::to_string(found) +
                          ", requested " + std::to_string(requested)) {}
};

// --- decomposition ---

class EvenKernelError : public ValidationError {
public:
    explicit EvenKernelError(int kernel)
        : ValidationError("moving-average kernel must be odd, got " + std::to_string(kernel)) {}
};

class KernelTooLargeError : public ValidationError {
public:
    KernelTooLargeError(int kernel, std::size_t length)
        : ValidationError("kernel " + std::to_string(kernel) + " larger than series length " +
                          std::to_string(length)) {}
};

// --- model / features ---

class ShapeMismatchError : public ValidationError {
public:
    explicit ShapeMismatchError(const std::string& msg)
        : ValidationError("shape mismatch: " + msg) {}
};

class IndexOutOfRangeError : public ValidationError {
public:
    IndexOutOfRangeError(std::size_t index, std::size_t size)
        : ValidationError("index " + std::to_string(index) + " out of range [0, " +
                          std::to_string(size) + ")") {}
};

class EmptySplitError : public ValidationError {
public:
    explicit EmptySplitError(const std::string& which)
        : ValidationError("empty " + which + " split") {}
};

class NotTrainedError : public ExecutionError {
public:
    NotTrainedError() : ExecutionError("model has not been trained") {}
    explicit NotTrainedError(const std::string& msg) : ExecutionError(msg) {}
};

class DivergedLossError : public ExecutionError {
public:
    explicit DivergedLossError(int epoch)
        : ExecutionError("training loss diverged (NaN/Inf) at epoch " + std::to_string(epoch)) {}
};

// --- metrics / interpret ---

class NonPositiveSigmaError : public ValidationError {
public:
    explicit NonPositiveSigmaError(double sigma)
        : ValidationError("sigma must be positive, got " + std::to_string(sigma)) {}
};

class KeyMismatchError : public ValidationError {
public:
    explicit KeyMismatchError(const std::string& msg)
        : ValidationError("key mismatch: " + msg) {}
};

// --- io / config ---

class IoError : public ExecutionError {
public:
    explicit IoError(const std::string& msg) : ExecutionError("io error: " + msg) {}
};

class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& msg) : ValidationError("config error: " + msg) {}
};

} // namespace loadlens
