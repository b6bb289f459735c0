#include "linrestrict/error.hpp"

namespace linrestrict {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape: return "shape-error";
    case ErrorCode::index: return "index-error";
    case ErrorCode::range: return "range-error";
    case ErrorCode::query: return "query-error";
    case ErrorCode::count: return "count-error";
    case ErrorCode::undefined: return "undefined-error";
    case ErrorCode::degenerate: return "degenerate-error";
    case ErrorCode::unsupported_layer: return "unsupported-layer";
    case ErrorCode::dimension: return "dimension-error";
    case ErrorCode::parse: return "parse-error";
    case ErrorCode::schema: return "schema-error";
    case ErrorCode::io: return "io-error";
    case ErrorCode::usage: return "usage-error";
  }
  return "unknown-error";
}

}  // namespace linrestrict
