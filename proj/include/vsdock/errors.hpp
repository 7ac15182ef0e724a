#pragma once

#include <stdexcept>

namespace vsdock {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonPositiveDepth : Error { using Error::Error; };
struct DepthUnderflow : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct TrackingLost : Error { using Error::Error; };
struct NoConsistentAssignment : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };
struct BehindCamera : Error { using Error::Error; };
struct MarkerBehindCamera : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct NonPlanarMount : Error { using Error::Error; };
struct EmptyLog : Error { using Error::Error; };
struct MissingFeatures : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct TrialAborted : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace vsdock
