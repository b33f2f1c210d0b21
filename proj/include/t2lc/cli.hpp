#pragma once

// The t2lc command line: gradcheck, verify, paramcount, simulate, train and
// compare subcommands.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
// `--config <file>` reads flat `key = value` lines (keys are flag names
// without dashes, `#` starts a comment); flags given on the command line win.
// T2LC_SEED sets the default seed. Every run starts with `#` header lines
// giving the version, seed and effective configuration.

#include <iosfwd>
#include <string>
#include <vector>

namespace t2lc::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace t2lc::cli
