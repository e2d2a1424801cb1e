#pragma once

#include <stdexcept>
#include <string>

namespace mdcl {

/// Base class of every error raised by the library. `kind()` is a stable
/// identifier that the CLI prints and tests match against.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MDCL_DECLARE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

// dataset
MDCL_DECLARE_ERROR(MissingCounterpart);
MDCL_DECLARE_ERROR(DimensionMismatch);
MDCL_DECLARE_ERROR(EmptyDataset);
MDCL_DECLARE_ERROR(CropTooLarge);
MDCL_DECLARE_ERROR(IoFailure);
MDCL_DECLARE_ERROR(PreconditionError);

// networks / patching
MDCL_DECLARE_ERROR(ShapeError);
MDCL_DECLARE_ERROR(DegenerateEmbedding);
MDCL_DECLARE_ERROR(NotEnoughLocations);
MDCL_DECLARE_ERROR(CheckpointFormatError);

// objectives / trainer
MDCL_DECLARE_ERROR(NonFiniteLoss);

// metrics
MDCL_DECLARE_ERROR(InsufficientSamples);
MDCL_DECLARE_ERROR(SqrtmFailure);
MDCL_DECLARE_ERROR(PairMismatch);
MDCL_DECLARE_ERROR(ExtractorUnavailable);

// configuration
MDCL_DECLARE_ERROR(ConfigError);

#undef MDCL_DECLARE_ERROR

}  // namespace mdcl
