#pragma once

#include <stdexcept>
#include <string>

namespace boss {

// Root of every error the engine raises. `kind()` is stable text used by the
// service to map errors onto HTTP status codes and by the CLI onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define BOSS_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

BOSS_DEFINE_ERROR(DimensionError, "dimension")
BOSS_DEFINE_ERROR(NumericDivergence, "numeric-divergence")
BOSS_DEFINE_ERROR(UsageError, "usage")
BOSS_DEFINE_ERROR(ConfigError, "config")
BOSS_DEFINE_ERROR(ScheduleExhausted, "schedule-exhausted")
BOSS_DEFINE_ERROR(DataError, "data")
BOSS_DEFINE_ERROR(FormatError, "format")
BOSS_DEFINE_ERROR(ValidationError, "validation")
BOSS_DEFINE_ERROR(AssemblyError, "assembly")
BOSS_DEFINE_ERROR(SequencingError, "sequencing")
BOSS_DEFINE_ERROR(NotFound, "not-found")
BOSS_DEFINE_ERROR(StateError, "state")

#undef BOSS_DEFINE_ERROR

}  // namespace boss
