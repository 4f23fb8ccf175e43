#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace heomcal::cli {

/// Entry point of the `heomcal` tool. Returns the process exit status: 0 iff
/// every requested artifact was written and validated against its schema.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "2,3,4,5"; throws ConfigError on a malformed list.
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace heomcal::cli
