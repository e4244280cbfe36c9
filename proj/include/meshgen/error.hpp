#pragma once

#include <stdexcept>
#include <string>

namespace meshgen {

// Every failure raised by the library derives from Error. The category maps
// onto the command-line exit codes (see cli/exit_codes).
enum class ErrorKind {
  Dimension,
  Contract,
  Domain,
  Index,
  Window,
  Format,
  Corruption,
  Io,
  Data,
  Config,
  Divergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define MESHGEN_DEFINE_ERROR(Name, Kind)                          \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

MESHGEN_DEFINE_ERROR(DimensionError, ErrorKind::Dimension)
MESHGEN_DEFINE_ERROR(ContractError, ErrorKind::Contract)
MESHGEN_DEFINE_ERROR(DomainError, ErrorKind::Domain)
MESHGEN_DEFINE_ERROR(IndexError, ErrorKind::Index)
MESHGEN_DEFINE_ERROR(WindowError, ErrorKind::Window)
MESHGEN_DEFINE_ERROR(FormatError, ErrorKind::Format)
MESHGEN_DEFINE_ERROR(CorruptionError, ErrorKind::Corruption)
MESHGEN_DEFINE_ERROR(IoError, ErrorKind::Io)
MESHGEN_DEFINE_ERROR(DataError, ErrorKind::Data)
MESHGEN_DEFINE_ERROR(ConfigError, ErrorKind::Config)
MESHGEN_DEFINE_ERROR(DivergenceError, ErrorKind::Divergence)

#undef MESHGEN_DEFINE_ERROR

}  // namespace meshgen
