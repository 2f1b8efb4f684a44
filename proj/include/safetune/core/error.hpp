// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace safetune {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Sampling produced a non-finite value.
class PolicyDivergence : public Error {
 public:
  using Error::Error;
};

/// A file on disk is malformed, truncated or of an unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace safetune
