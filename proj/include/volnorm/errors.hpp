#pragma once

#include <stdexcept>
#include <string>

namespace volnorm {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define VOLNORM_DEFINE_ERROR(NAME)                              \
  struct NAME : Error {                                         \
    explicit NAME(const std::string& msg) : Error(msg) {}       \
  }

// volume
VOLNORM_DEFINE_ERROR(EmptyVolume);
VOLNORM_DEFINE_ERROR(InsufficientSlices);
VOLNORM_DEFINE_ERROR(MalformedHeader);
VOLNORM_DEFINE_ERROR(UnsupportedDatatype);
VOLNORM_DEFINE_ERROR(TruncatedData);
VOLNORM_DEFINE_ERROR(InvalidConfig);
VOLNORM_DEFINE_ERROR(ConstantVolume);
VOLNORM_DEFINE_ERROR(InvalidVolume);

// tensorkit
VOLNORM_DEFINE_ERROR(ShapeMismatch);
VOLNORM_DEFINE_ERROR(NonScalarLoss);
VOLNORM_DEFINE_ERROR(GraphConsumed);
VOLNORM_DEFINE_ERROR(NumericError);

// isgen / normalization
VOLNORM_DEFINE_ERROR(VolumeTooThin);
VOLNORM_DEFINE_ERROR(LengthMismatch);
VOLNORM_DEFINE_ERROR(EmptyDataset);
VOLNORM_DEFINE_ERROR(TooFewSlices);
VOLNORM_DEFINE_ERROR(ModelMissing);

// radiomics / selection
VOLNORM_DEFINE_ERROR(EmptyMask);
VOLNORM_DEFINE_ERROR(DegenerateRegion);
VOLNORM_DEFINE_ERROR(MissingModality);
VOLNORM_DEFINE_ERROR(WindowTooLarge);

// mlkit
VOLNORM_DEFINE_ERROR(EmptyData);
VOLNORM_DEFINE_ERROR(InconsistentDims);
VOLNORM_DEFINE_ERROR(EmptyGrid);
VOLNORM_DEFINE_ERROR(KTooLarge);
VOLNORM_DEFINE_ERROR(OneClassOnly);
VOLNORM_DEFINE_ERROR(UnbalancedDesign);
VOLNORM_DEFINE_ERROR(InvalidRates);

// io
VOLNORM_DEFINE_ERROR(IoError);

#undef VOLNORM_DEFINE_ERROR

}  // namespace volnorm
