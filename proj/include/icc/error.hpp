#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace icc {

// Base for everything the library throws. The CLI maps each subclass onto a
// distinct process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 4; }
};

/// Malformed input: unreadable file, bad JSON, wrong byte length, checksum mismatch.
class FormatError : public Error {
public:
    FormatError(const std::string& file, std::uint64_t offset, const std::string& what)
        : Error(file + ": byte " + std::to_string(offset) + ": " + what),
          file_(file), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    int exit_code() const noexcept override { return 2; }
    const std::string& file() const noexcept { return file_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::string file_;
    std::uint64_t offset_ = 0;
};

/// Well-formed input whose content breaks an invariant (label range, sample counts, NaN).
class ValidationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// A measure or ranking could not be computed on otherwise valid input.
class ComputationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

}  // namespace icc
