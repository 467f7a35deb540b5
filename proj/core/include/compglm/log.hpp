#pragma once

#include <functional>
#include <string_view>

namespace compglm {

using WarningHandler = std::function<void(std::string_view)>;

/// Emit a warning through the installed handler (stderr by default).
/// Thread-safe.
void warn(std::string_view message);

/// Replace the warning handler; returns the previous one. Passing an empty
/// function silences warnings.
WarningHandler set_warning_handler(WarningHandler handler);

/// RAII capture of warnings, mostly for tests.
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler handler)
      : previous_(set_warning_handler(std::move(handler))) {}
  ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler previous_;
};

}  // namespace compglm
