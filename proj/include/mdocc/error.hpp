// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mdocc {

enum class ErrorCode {
  InvalidArgument,
  BadMagic,
  TruncatedPayload,
  VersionUnsupported,
  ExtentTooSmall,
  EmptyIntersection,
  UnknownDataset,
  DimMismatch,
  MisalignedCorpus,
  InfeasibleCover,
  DivergedLoss,
  OutOfGrid,
  GeometryMismatch,
  MissingTransform,
  IoFailure,
  ConfigError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Error raised by a binary decoder; carries the byte offset where decoding stopped.
class DecodeError : public Error {
 public:
  DecodeError(ErrorCode code, std::size_t offset, const std::string& what)
      : Error(code, what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace mdocc
