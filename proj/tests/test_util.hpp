#pragma once

#include "pedmr/error.hpp"

#include "doctest.h"

#include <sstream>
#include <string>

// Runs fn and returns the module-qualified error code it threw ("" if none).
template <class F>
std::string error_code(F&& fn) {
  try {
    fn();
  } catch (const pedmr::Error& e) {
    return e.code();
  }
  return "";
}

inline std::istringstream text(const std::string& s) { return std::istringstream(s); }
