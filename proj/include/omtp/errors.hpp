#ifndef OMTP_ERRORS_HPP
#define OMTP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace omtp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the requested operation.
struct DimensionError : Error {
    using Error::Error;
};

// Non-finite values produced during simulation or optimisation.
struct DivergenceError : Error {
    using Error::Error;
};

// A state outside the physical domain of a model.
struct DomainError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

namespace detail {

inline std::string dims(std::size_t rows, std::size_t cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail
}  // namespace omtp

#endif
