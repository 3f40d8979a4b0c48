#pragma once

#include <stdexcept>
#include <string>

namespace kgc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not compose (matmul, elementwise ops, ...).
struct ShapeError : Error {
  using Error::Error;
};

// A forward or backward pass produced NaN/Inf.
struct NumericError : Error {
  using Error::Error;
};

// Bad or missing configuration key / value.
struct ConfigError : Error {
  using Error::Error;
};

// File not found, unreadable, or malformed on disk.
struct IoError : Error {
  using Error::Error;
};

// Distillation schedule produced a non-positive retention ratio.
struct ScheduleError : Error {
  using Error::Error;
};

}  // namespace kgc
