#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace grudw {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

// Unreadable, malformed or mismatched inputs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a64_hex(std::string_view bytes);

std::string read_file(const std::string& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grudw
