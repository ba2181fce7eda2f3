#pragma once

// Runs the rubric-loop binary as a subprocess with a private home and no
// API key in its environment.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

namespace cli {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;

  nlohmann::json json() const { return nlohmann::json::parse(out); }
};

inline std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Result run(const std::filesystem::path& home, const std::vector<std::string>& args,
                  const std::string& stdin_text = {}) {
  const auto out_path = home / ".cli_out";
  const auto err_path = home / ".cli_err";
  const auto in_path = home / ".cli_in";
  std::filesystem::create_directories(home);
  std::ofstream(in_path, std::ios::binary | std::ios::trunc) << stdin_text;
  std::string cmd = "env -u RUBRIC_LOOP_API_KEY RUBRIC_LOOP_HOME=" + quote(home.string()) + " " +
                    quote(RUBRIC_LOOP_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " <" + quote(in_path.string()) + " >" + quote(out_path.string()) + " 2>" + quote(err_path.string());
  const int status = std::system(cmd.c_str());
  Result r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace cli
