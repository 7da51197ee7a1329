#pragma once

namespace avse::cli {

// Entry point of the avse tool. Returns 0 on success, 1 on runtime failure
// and 2 on a command-line error.
int run(int argc, char** argv);

}  // namespace avse::cli
