#include "mdcl/errors.hpp"

namespace mdcl {

Error::Error(std::string kind, const std::string& message)
    : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

}  // namespace mdcl
