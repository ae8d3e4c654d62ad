#include "tubespoof/json_util.hpp"

#include <fstream>
#include <sstream>

namespace tubespoof::jsonutil {

nlohmann::json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Format, path.string() + ": invalid JSON: " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << dump(j) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::string dump(const nlohmann::json& j) { return j.dump(2); }

}  // namespace tubespoof::jsonutil
