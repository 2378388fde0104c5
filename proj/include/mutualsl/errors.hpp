// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mutualsl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed corpus line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Raised when a sample has no subtitle tokens to score.
class NoTextTarget : public Error {
public:
    NoTextTarget() : Error("NO_TEXT_TARGET: sample has no subtitle tokens") {}
};

class ManifestMismatch : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(int epoch, long step, const std::string& what)
        : Error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                std::to_string(step) + ": " + what),
          epoch_(epoch), step_(step) {}
    int epoch() const noexcept { return epoch_; }
    long step() const noexcept { return step_; }

private:
    int epoch_;
    long step_;
};

}  // namespace mutualsl
