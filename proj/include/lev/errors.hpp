#pragma once

#include <stdexcept>
#include <string>

namespace lev {

/// Process exit status for each error family. The CLI maps exceptions onto these.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    validation = 2,
    numeric = 3,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept { return ExitCode::validation; }
};

// Data / format problems (exit 2).
class ParseError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class AlignmentError : public Error { public: using Error::Error; };
class MissingPhraseError : public Error { public: using Error::Error; };
class DimMismatchError : public Error { public: using Error::Error; };
class EmptyTableError : public Error { public: using Error::Error; };
class IncompleteGridError : public Error { public: using Error::Error; };

// Numeric failures (exit 3).
class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numeric; }
};
class DegenerateAxisError : public NumericError { public: using NumericError::NumericError; };
class ZeroVarianceError : public NumericError { public: using NumericError::NumericError; };
class ConvergenceError : public NumericError { public: using NumericError::NumericError; };
class DegenerateError : public NumericError { public: using NumericError::NumericError; };

// Caller violated a documented precondition (bad k, perplexity too large, ...): exit 1.
class PreconditionError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

} // namespace lev
