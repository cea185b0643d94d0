#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "tbqn/errors.h"

namespace tbqn {

// Shortest round-trip decimal rendering; keeps CSV output byte-stable across
// runs (std::to_chars is locale-independent).
inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("fmt_double: conversion failed");
  return std::string(buf, p);
}

inline std::string fmt_float(float v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("fmt_float: conversion failed");
  return std::string(buf, p);
}

}  // namespace tbqn
