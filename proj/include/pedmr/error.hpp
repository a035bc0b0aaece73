#pragma once

#include <stdexcept>
#include <string>

namespace pedmr {

// Exception carrying a module-qualified code such as "pedigree.cycle" so the
// CLI can emit machine-readable failures.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message);

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace pedmr
