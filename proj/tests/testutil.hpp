#pragma once

// Small shared helpers for the test binaries: scratch directories, file IO,
// and running the CLI binary with captured exit codes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto p = fs::temp_directory_path() /
               ("seglm_" + std::to_string(rd() % 1000000000));
      std::error_code ec;
      if (fs::create_directory(p, ec)) {
        path_ = p;
        return;
      }
    }
    throw std::runtime_error("could not create a scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a shell command; returns the exit code, fills captured stdout+stderr.
inline int run_cmd(const std::string& cmd, std::string* output = nullptr) {
  TempDir scratch;
  const std::string out_path = scratch.file("out.txt");
  const int rc = std::system((cmd + " >" + out_path + " 2>&1").c_str());
  if (output) *output = read_file(out_path);
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

}  // namespace testutil
