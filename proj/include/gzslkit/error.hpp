#pragma once

#include <stdexcept>
#include <string>

namespace gzsl {

// Error categories map to CLI exit codes: config=2, data=3, numeric=4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

#define GZSL_DEFINE_ERROR(Name, Base)                          \
    class Name : public Base {                                 \
    public:                                                    \
        explicit Name(const std::string& msg) : Base(msg) {}   \
    }

GZSL_DEFINE_ERROR(ZeroVectorError, NumericError);
GZSL_DEFINE_ERROR(NegativeEntryError, NumericError);
GZSL_DEFINE_ERROR(NonScalarOutputError, NumericError);
GZSL_DEFINE_ERROR(NonFiniteError, NumericError);
GZSL_DEFINE_ERROR(DegenerateClusteringError, NumericError);
GZSL_DEFINE_ERROR(RejectionTimeoutError, NumericError);

GZSL_DEFINE_ERROR(DimensionMismatchError, DataError);
GZSL_DEFINE_ERROR(ParseError, DataError);
GZSL_DEFINE_ERROR(MagicMismatchError, DataError);
GZSL_DEFINE_ERROR(TruncatedFileError, DataError);
GZSL_DEFINE_ERROR(UnknownClassError, DataError);
GZSL_DEFINE_ERROR(UnknownLabelError, DataError);
GZSL_DEFINE_ERROR(UnseenLabelInClLossError, DataError);
GZSL_DEFINE_ERROR(MissingAttributeTableError, DataError);
GZSL_DEFINE_ERROR(EmptyDatasetError, DataError);
GZSL_DEFINE_ERROR(EmptyClassError, DataError);
GZSL_DEFINE_ERROR(MissingClassInTestError, DataError);

GZSL_DEFINE_ERROR(InvalidConfigError, ConfigError);

#undef GZSL_DEFINE_ERROR

}  // namespace gzsl
