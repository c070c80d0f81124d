#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace adcloud {

enum class Errc {
  // binstream
  UnknownTag,
  TruncatedField,
  TruncatedRecord,
  TruncatedFrame,
  InvalidUtf8,
  RemoteError,
  SinkIoError,
  SpawnError,
  ChildExited,
  BridgeProtocolError,
  // engine
  DuplicateName,
  UnknownOp,
  InvalidPlan,
  InvalidArgument,
  PortBindError,
  ParseError,
  EmptyInput,
  TaskFailed,
  MissingBlock,
  // storage
  BlockTooLarge,
  StorageFull,
  NotFound,
  BackingIoError,
  // simharness
  TimestampRegression,
  GoldenJoinError,
  // trainer
  DimensionMismatch,
  NonFiniteGradient,
  StaleIteration,
  MissingUpdate,
  // mapgen
  NonPositiveDt,
  StaleGps,
  NoCorrespondences,
  DegenerateGeometry,
  MalformedLabelSpec,
  TimeAlignment,
  // cli
  ConfigError,
};

std::string_view errc_name(Errc code);

/// Error raised by every adcloud module. `detail` carries the partition index
/// for TaskFailed and the exit status for ChildExited; it is -1 otherwise.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::int64_t detail = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  std::int64_t detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::int64_t detail_;
};

}  // namespace adcloud
