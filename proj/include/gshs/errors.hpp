#pragma once

#include <stdexcept>
#include <string>

namespace gshs {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define GSHS_DEFINE_ERROR(Name)                                   \
    struct Name : Error {                                         \
        explicit Name(const std::string& msg) : Error(msg) {}     \
    }

GSHS_DEFINE_ERROR(DegenerateQuaternion);
GSHS_DEFINE_ERROR(BehindCamera);
GSHS_DEFINE_ERROR(InvalidConfig);
GSHS_DEFINE_ERROR(ShapeMismatch);
GSHS_DEFINE_ERROR(DegeneratePosition);
GSHS_DEFINE_ERROR(SingularCovariance);
GSHS_DEFINE_ERROR(InvalidK);
GSHS_DEFINE_ERROR(ZeroNormEmbedding);
GSHS_DEFINE_ERROR(DivergedLoss);
GSHS_DEFINE_ERROR(UnknownSpec);
GSHS_DEFINE_ERROR(BadMagic);
GSHS_DEFINE_ERROR(VersionMismatch);
GSHS_DEFINE_ERROR(TruncatedFile);
GSHS_DEFINE_ERROR(CountMismatch);
GSHS_DEFINE_ERROR(ParseError);
GSHS_DEFINE_ERROR(UnknownKey);
GSHS_DEFINE_ERROR(IoFailure);

#undef GSHS_DEFINE_ERROR

}  // namespace gshs
