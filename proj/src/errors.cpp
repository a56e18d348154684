#include "mtse/errors.hpp"

namespace mtse {

const char* errc_name(errc c) {
  switch (c) {
    case errc::ok: return "ok";
    case errc::usage: return "usage";
    case errc::config: return "config";
    case errc::io: return "io";
    case errc::format: return "format";
    case errc::input: return "input";
    case errc::numeric: return "numeric";
    case errc::degenerate: return "degenerate";
    case errc::internal: return "internal";
  }
  return "unknown";
}

}  // namespace mtse
