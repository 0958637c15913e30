#pragma once

#include <stdexcept>
#include <string>

namespace specwin {

// Common base so callers can catch toolkit errors separately from std ones.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// topology
struct TopologyUnavailable : Error { using Error::Error; };
struct PinFailed : Error { using Error::Error; };
struct InvalidCpu : Error { using Error::Error; };

// codegen
struct AllocFailed : Error { using Error::Error; };
struct UnsupportedGadget : Error { using Error::Error; };
struct UnsupportedWorkload : Error { using Error::Error; };

// channel
struct NoFlushSupport : Error { using Error::Error; };
struct DistributionsOverlap : Error { using Error::Error; };

// workloads
struct NotSibling : Error { using Error::Error; };
struct SmtDisabled : Error { using Error::Error; };

// harness
struct CalibrationFailed : Error { using Error::Error; };

// report
struct EmptyResultSet : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace specwin
