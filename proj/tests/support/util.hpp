#pragma once

// Filesystem and subprocess helpers shared by the test binaries.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

namespace fs = std::filesystem;

// Self-deleting temporary directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "capconf-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  q += "'";
  return q;
}

// Runs the CLI binary with the given arguments, capturing stdout/stderr.
// `cwd` is the working directory for the child process.
inline CliResult run_cli(const std::string& binary, const std::vector<std::string>& args,
                         const fs::path& cwd) {
  const fs::path out_file = cwd / ".test-stdout";
  const fs::path err_file = cwd / ".test-stderr";
  std::string cmd = "cd " + shell_quote(cwd.string()) + " && LC_ALL=C " + shell_quote(binary);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(out_file.string()) + " 2> " + shell_quote(err_file.string());
  const int raw = std::system(cmd.c_str());
  CliResult r;
  if (raw == -1) {
    r.exit_code = -1;
  } else if (WIFEXITED(raw)) {
    r.exit_code = WEXITSTATUS(raw);
  } else {
    r.exit_code = 128;
  }
  r.out = read_file(out_file);
  r.err = read_file(err_file);
  std::error_code ec;
  fs::remove(out_file, ec);
  fs::remove(err_file, ec);
  return r;
}

// Maps every regular file under `root` (recursively) to its raw bytes,
// keyed by the generic relative path. Used for byte-level tree comparison.
inline std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> tree;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    tree[fs::relative(entry.path(), root).generic_string()] = read_file(entry.path());
  }
  return tree;
}

// Returns a human-readable description of the first difference between two
// trees, or an empty string when identical.
inline std::string diff_trees(const std::map<std::string, std::string>& a,
                              const std::map<std::string, std::string>& b) {
  for (const auto& [rel, bytes] : a) {
    auto it = b.find(rel);
    if (it == b.end()) return "missing in second tree: " + rel;
    if (it->second != bytes) {
      std::size_t at = 0;
      const std::size_t n = std::min(bytes.size(), it->second.size());
      while (at < n && bytes[at] == it->second[at]) ++at;
      return "content differs: " + rel + " (first difference at byte " + std::to_string(at) +
             ", sizes " + std::to_string(bytes.size()) + " vs " +
             std::to_string(it->second.size()) + ")";
    }
  }
  for (const auto& [rel, bytes] : b) {
    (void)bytes;
    if (a.find(rel) == a.end()) return "missing in first tree: " + rel;
  }
  return "";
}

// Splits text into lines, dropping a trailing empty line from a final "\n".
inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace testutil
