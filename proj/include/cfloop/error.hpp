#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cfloop {

/// Machine-readable failure categories. The service maps these onto HTTP
/// status codes and echoes `to_string(code)` in error payloads.
enum class ErrorCode {
    Io,
    EmptyFile,
    MissingColumn,
    BadNumber,
    UnknownCategory,
    SchemaInvalid,
    SchemaMismatch,
    InvalidArgument,
    SingleClass,
    CorruptModel,
    VersionMismatch,
    UnknownFeature,
    DuplicateConstraint,
    MissingConstraint,
    IncompatibleConstraint,
    NoOppositeClass,
    FavorableInstance,
    InvalidState,
    EmptyInput,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised while ingesting CSV/schema files. Carries the 1-based data row
/// (header excluded) and the offending column when known.
class DataError : public Error {
public:
    DataError(ErrorCode code, const std::string& message, std::optional<std::size_t> row = std::nullopt,
              std::optional<std::string> column = std::nullopt);

    [[nodiscard]] const std::optional<std::size_t>& row() const noexcept { return row_; }
    [[nodiscard]] const std::optional<std::string>& column() const noexcept { return column_; }

private:
    std::optional<std::size_t> row_;
    std::optional<std::string> column_;
};

}  // namespace cfloop
