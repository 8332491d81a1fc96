#ifndef POSTWATCH_CLI_HPP
#define POSTWATCH_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace postwatch::cli {

// Exit status contract: 0 success, 1 usage/config error, 2 data error.
// Machine-readable summaries go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

} // namespace postwatch::cli

#endif
