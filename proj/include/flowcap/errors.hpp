#pragma once

#include <stdexcept>
#include <string>

namespace flowcap {

// Error taxonomy. Each kind maps to one CLI exit code (see tools/flowcap.cpp).
enum class ErrorKind {
    Shape,
    Contract,
    Vocabulary,
    Length,
    Format,
    Data,
    Config,
    Numeric,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& w) : Error(ErrorKind::Contract, w) {}
};
struct VocabError : Error {
    explicit VocabError(const std::string& w) : Error(ErrorKind::Vocabulary, w) {}
};
struct LengthError : Error {
    explicit LengthError(const std::string& w) : Error(ErrorKind::Length, w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

}  // namespace flowcap
