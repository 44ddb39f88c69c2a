#pragma once

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>

// Always-on checks; never compiled out in Release.
#define REQUIRE(cond)                                                          \
  do {                                                                         \
    if (!(cond)) {                                                             \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << #cond    \
                << "\n";                                                       \
      std::exit(1);                                                            \
    }                                                                          \
  } while (0)

#define REQUIRE_MSG(cond, msg)                                                 \
  do {                                                                         \
    if (!(cond)) {                                                             \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << #cond    \
                << " | " << msg << "\n";                                       \
      std::exit(1);                                                            \
    }                                                                          \
  } while (0)

#define REQUIRE_NEAR(a, b, tol)                                                \
  do {                                                                         \
    const double _a = (a);                                                     \
    const double _b = (b);                                                     \
    if (!(std::abs(_a - _b) <= (tol))) {                                       \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " |" << _a      \
                << " - " << _b << "| > " << (tol) << "\n";                     \
      std::exit(1);                                                            \
    }                                                                          \
  } while (0)

#define REQUIRE_THROWS(expr, ExType)                                           \
  do {                                                                         \
    bool _caught = false;                                                      \
    try {                                                                      \
      (void)(expr);                                                            \
    } catch (const ExType&) {                                                  \
      _caught = true;                                                          \
    }                                                                          \
    if (!_caught) {                                                            \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " expected "    \
                << #ExType << " from " << #expr << "\n";                       \
      std::exit(1);                                                            \
    }                                                                          \
  } while (0)

inline void section(const std::string& name) { std::cout << "-- " << name << "\n"; }
