#pragma once

#include <stdexcept>
#include <string>

namespace selfc {

/// Base of every error the library raises. `kind()` is a stable,
/// machine-parsable class name that the CLI prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define SELFC_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name, what) {}         \
    }

SELFC_DEFINE_ERROR(DimensionError);
SELFC_DEFINE_ERROR(DomainError);
SELFC_DEFINE_ERROR(InsufficientSampleError);
SELFC_DEFINE_ERROR(IngestionError);
SELFC_DEFINE_ERROR(CodecError);
SELFC_DEFINE_ERROR(EnvironmentError);
SELFC_DEFINE_ERROR(ConfigError);
SELFC_DEFINE_ERROR(CheckpointError);
SELFC_DEFINE_ERROR(NonFiniteLossError);
SELFC_DEFINE_ERROR(UsageError);

#undef SELFC_DEFINE_ERROR

} // namespace selfc
