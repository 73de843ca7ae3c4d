#ifndef STRATFACT_ERRORS_HPP
#define STRATFACT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stratfact {

// Bad input: malformed files, broken preconditions, out-of-range arguments.
// Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically singular system (failed Cholesky pivot). Maps to CLI exit
// code 3. `pivot` is the 1-based index of the failing diagonal entry.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& msg, int pivot)
      : std::runtime_error(msg), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

}  // namespace stratfact

#endif  // STRATFACT_ERRORS_HPP
