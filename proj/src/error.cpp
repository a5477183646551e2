#include "cfloop/error.hpp"

namespace cfloop {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io: return "io_error";
        case ErrorCode::EmptyFile: return "empty_file";
        case ErrorCode::MissingColumn: return "missing_column";
        case ErrorCode::BadNumber: return "bad_number";
        case ErrorCode::UnknownCategory: return "unknown_category";
        case ErrorCode::SchemaInvalid: return "schema_invalid";
        case ErrorCode::SchemaMismatch: return "schema_mismatch";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::SingleClass: return "single_class";
        case ErrorCode::CorruptModel: return "corrupt_model";
        case ErrorCode::VersionMismatch: return "version_mismatch";
        case ErrorCode::UnknownFeature: return "unknown_feature";
        case ErrorCode::DuplicateConstraint: return "duplicate_constraint";
        case ErrorCode::MissingConstraint: return "missing_constraint";
        case ErrorCode::IncompatibleConstraint: return "incompatible_constraint";
        case ErrorCode::NoOppositeClass: return "no_opposite_class";
        case ErrorCode::FavorableInstance: return "favorable_instance";
        case ErrorCode::InvalidState: return "invalid_state";
        case ErrorCode::EmptyInput: return "empty_input";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}

namespace {

std::string decorate(const std::string& message, const std::optional<std::size_t>& row,
                     const std::optional<std::string>& column) {
    std::string out = message;
    if (row) out += " (row " + std::to_string(*row) + ")";
    if (column) out += " (column '" + *column + "')";
    return out;
}

}  // namespace

DataError::DataError(ErrorCode code, const std::string& message, std::optional<std::size_t> row,
                     std::optional<std::string> column)
    : Error(code, decorate(message, row, column)), row_(row), column_(std::move(column)) {}

}  // namespace cfloop
