// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ecbm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible array shapes, wrong vector lengths, bad indices.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an argument outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file / request payload.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced during evaluation, training or inference.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An exact enumeration would exceed its configured size cap.
class EnumerationLimit : public Error {
 public:
  using Error::Error;
};

}  // namespace ecbm
