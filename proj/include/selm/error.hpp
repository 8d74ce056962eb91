#pragma once

#include <stdexcept>
#include <string>

namespace selm {

// Every error carries a short machine-parsable class name; the CLI prints it
// and maps it to an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string cls, const std::string& what)
        : std::runtime_error(what), cls_(std::move(cls)) {}
    const std::string& error_class() const noexcept { return cls_; }

private:
    std::string cls_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error("DimensionError", w) {}
};
struct PreconditionError : Error {
    explicit PreconditionError(const std::string& w) : Error("PreconditionError", w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("ConfigError", w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error("FormatError", w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error("IoError", w) {}
};
struct InputError : Error {
    explicit InputError(const std::string& w) : Error("InputError", w) {}
};
struct EntropyError : Error {
    explicit EntropyError(const std::string& w) : Error("EntropyError", w) {}
};
struct EncryptionBudgetExceeded : Error {
    explicit EncryptionBudgetExceeded(const std::string& w)
        : Error("EncryptionBudgetExceeded", w) {}
};
struct ModelMismatch : Error {
    explicit ModelMismatch(const std::string& w) : Error("ModelMismatch", w) {}
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw PreconditionError(msg);
}

} // namespace selm
