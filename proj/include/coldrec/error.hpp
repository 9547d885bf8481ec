#pragma once

#include <stdexcept>
#include <string>

namespace coldrec {

// Failure categories map onto CLI exit codes: validation 1, data 2, training 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace coldrec
