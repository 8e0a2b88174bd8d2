#pragma once

#include <stdexcept>

namespace blipvar {

// Error classes map onto CLI exit codes: io = 2, validation = 3, numeric = 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// CSV ingestion failures, one kind per rejected condition.
struct MissingFileError : IoError {
  using IoError::IoError;
};
struct MissingColumnError : ValidationError {
  using ValidationError::ValidationError;
};
struct NonNumericCellError : ValidationError {
  using ValidationError::ValidationError;
};
struct MissingValueError : ValidationError {
  using ValidationError::ValidationError;
};
struct NonBinaryTreatmentError : ValidationError {
  using ValidationError::ValidationError;
};

struct NonConvergenceError : NumericError {
  using NumericError::NumericError;
};
struct RankDeficientError : NumericError {
  using NumericError::NumericError;
};
struct SingularMatrixError : NumericError {
  using NumericError::NumericError;
};

}  // namespace blipvar
