#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>

namespace cni::testing {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the tool with `args` (already shell-quoted), capturing stdout/stderr via files in `scratch`.
inline CliResult run_cli(const std::string& tool, const std::string& args, const std::filesystem::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = "'" + tool + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// Value of `key=<v>` on standard output, or NaN.
inline double stdout_value(const CliResult& r, const std::string& key) {
  const auto pos = r.out.find(key + "=");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(r.out.substr(pos + key.size() + 1));
}

}  // namespace cni::testing
