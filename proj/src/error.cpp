#include "adcloud/error.hpp"

namespace adcloud {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnknownTag: return "UnknownTag";
    case Errc::TruncatedField: return "TruncatedField";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::TruncatedFrame: return "TruncatedFrame";
    case Errc::InvalidUtf8: return "InvalidUtf8";
    case Errc::RemoteError: return "RemoteError";
    case Errc::SinkIoError: return "SinkIoError";
    case Errc::SpawnError: return "SpawnError";
    case Errc::ChildExited: return "ChildExited";
    case Errc::BridgeProtocolError: return "BridgeProtocolError";
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::UnknownOp: return "UnknownOp";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::PortBindError: return "PortBindError";
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::TaskFailed: return "TaskFailed";
    case Errc::MissingBlock: return "MissingBlock";
    case Errc::BlockTooLarge: return "BlockTooLarge";
    case Errc::StorageFull: return "StorageFull";
    case Errc::NotFound: return "NotFound";
    case Errc::BackingIoError: return "BackingIoError";
    case Errc::TimestampRegression: return "TimestampRegression";
    case Errc::GoldenJoinError: return "GoldenJoinError";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::StaleIteration: return "StaleIteration";
    case Errc::MissingUpdate: return "MissingUpdate";
    case Errc::NonPositiveDt: return "NonPositiveDt";
    case Errc::StaleGps: return "StaleGps";
    case Errc::NoCorrespondences: return "NoCorrespondences";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::MalformedLabelSpec: return "MalformedLabelSpec";
    case Errc::TimeAlignment: return "TimeAlignment";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace adcloud
