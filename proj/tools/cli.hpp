#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace nus::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat "key = value" config: '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);

}  // namespace nus::cli
