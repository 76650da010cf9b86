// -*- mode: c++ -*-
#ifndef PERFADAPT_ERRORS_HPP
#define PERFADAPT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace perfadapt {

// Root of every error raised by the library.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed input text. line() is 1-based, 0 when not tied to a line.
class parse_error : public error {
  public:
    parse_error(const std::string &what, std::size_t line = 0) :
        error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_{ line } {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

// A label that is not -1/+1, or a prediction token that cannot be turned into one.
class labeling_error : public error {
  public:
    using error::error;
};

// An invalid hyperparameter or argument value (B <= 0, C <= 0, m = 0, ...).
class parameter_error : public error {
  public:
    using error::error;
};

// Mismatched lengths or matrix shapes.
class shape_error : public error {
  public:
    using error::error;
};

// The measure is not defined on the given labels (e.g. no positives for F1).
class measure_undefined_error : public error {
  public:
    using error::error;
};

// A label vector outside the admissible set of a measure (PRBEP).
class admissibility_error : public error {
  public:
    using error::error;
};

// Exhaustive enumeration requested beyond its size bound.
class capacity_error : public error {
  public:
    using error::error;
};

// External predictions that cannot be aligned to a dataset.
class alignment_error : public error {
  public:
    using error::error;
};

// Corrupted or unrecognized model/config files.
class format_error : public error {
  public:
    using error::error;
};

// A learner could not be trained on the given data.
class training_error : public error {
  public:
    using error::error;
};

// Invalid command line or configuration.
class usage_error : public error {
  public:
    using error::error;
};

// A run hit its iteration limit under --strict.
class convergence_error : public error {
  public:
    using error::error;
};

}  // namespace perfadapt

#endif
