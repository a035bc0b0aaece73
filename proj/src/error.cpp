#include "pedmr/error.hpp"

namespace pedmr {

Error::Error(std::string code, const std::string& message)
    : std::runtime_error(message), code_(std::move(code)) {}

}  // namespace pedmr
