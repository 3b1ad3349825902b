#pragma once

namespace dgfd::cli {

// Entry point for the command-line tool. Returns a process exit code.
int run(int argc, char** argv);

}  // namespace dgfd::cli
