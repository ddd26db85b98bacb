#pragma once

#include <stdexcept>
#include <string>

namespace shm {

// Exception hierarchy. The CLI maps each family onto an exit code:
// UsageError -> 1, DataError -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace shm
