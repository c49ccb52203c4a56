#pragma once

#include <stdexcept>
#include <string>

namespace ccat {

// Every library failure derives from Error so callers can catch once and
// still dispatch on the concrete kind.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CCAT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

// audio / features
CCAT_DEFINE_ERROR(ParseError);
CCAT_DEFINE_ERROR(UnsupportedFormat);
CCAT_DEFINE_ERROR(TooShort);

// tensors and models
CCAT_DEFINE_ERROR(ShapeError);
CCAT_DEFINE_ERROR(ConfigError);
CCAT_DEFINE_ERROR(AllMasked);
CCAT_DEFINE_ERROR(EmptyInput);
CCAT_DEFINE_ERROR(NumericError);
CCAT_DEFINE_ERROR(FormatError);
CCAT_DEFINE_ERROR(CorruptCheckpoint);

// training
CCAT_DEFINE_ERROR(LabelError);
CCAT_DEFINE_ERROR(EmptyBatch);
CCAT_DEFINE_ERROR(DivergenceError);

// metrics / data / tuning
CCAT_DEFINE_ERROR(DegenerateInput);
CCAT_DEFINE_ERROR(TooFewPoints);
CCAT_DEFINE_ERROR(EmptyEnsemble);

#undef CCAT_DEFINE_ERROR

}  // namespace ccat
