#pragma once

#include <stdexcept>
#include <string>

namespace scunet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/extent mismatches between tensors or against an op's contract.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration (model/train/data); message names the failing constraint.
struct ConfigError : Error {
    using Error::Error;
};

// Wrong call sequence or missing state (e.g. backward without reset, missing grads).
struct StateError : Error {
    using Error::Error;
};

// An op contract violated by the caller (e.g. non-scalar loss passed to backward).
struct ContractError : Error {
    using Error::Error;
};

// Bad bytes on disk: magic, dtype codes, mask values, shape disagreement.
struct FormatError : Error {
    using Error::Error;
};

// Bad user input at an API/CLI boundary.
struct UsageError : Error {
    using Error::Error;
};

// Phantom generator could not satisfy its geometric constraints.
struct GenerationError : Error {
    using Error::Error;
};

// Batch statistics taken over a single element.
struct DegenerateStatsError : Error {
    using Error::Error;
};

// Hausdorff distance requested for an empty mask.
struct HdUndefinedError : Error {
    using Error::Error;
};

// Non-finite value detected while finiteness checks are active.
struct NumericError : Error {
    using Error::Error;
};

// A broken internal invariant; always a programming error.
struct InternalError : Error {
    using Error::Error;
};

}  // namespace scunet
