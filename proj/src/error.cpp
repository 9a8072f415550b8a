#include "ape/error.hpp"

namespace ape {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::Truncated: return "Truncated";
        case ErrorKind::ShapeOverflow: return "ShapeOverflow";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NonOneHot: return "NonOneHot";
        case ErrorKind::Parse: return "Parse";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace ape
