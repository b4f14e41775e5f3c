#ifndef METAVRFT_ERRORS_HPP_
#define METAVRFT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace metavrft {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind { kNumerical = 1, kUsage = 2, kIo = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorKind::kUsage, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace metavrft

#endif  // METAVRFT_ERRORS_HPP_
