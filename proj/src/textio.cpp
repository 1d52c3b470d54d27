#include "stpose/textio.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "bytes.hpp"

namespace stpose {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      if (pos < text.size()) out.push_back(text.substr(pos));
      break;
    }
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  int lineno = 0;
  for (const std::string& raw : split_lines(text)) {
    ++lineno;
    std::string line = raw;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractError("config line " + std::to_string(lineno) + " is not key=value: " + raw);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ContractError("config line " + std::to_string(lineno) + " has an empty key");
    out.emplace_back(std::move(key), std::move(val));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(const std::string& path) {
  return parse_kv_text(bytes::read_file(path));
}

long long parse_ll(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end == s.c_str() || *end != '\0')
    throw ContractError(what + ": not an integer: '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno == ERANGE || end == s.c_str() || *end != '\0')
    throw ContractError(what + ": not a number: '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

void write_pose_lines(const std::string& path, const std::vector<std::vector<double>>& poses) {
  std::string out;
  char buf[40];
  for (const auto& pose : poses) {
    for (size_t i = 0; i < pose.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", pose[i]);
      if (i) out.push_back(' ');
      out.append(buf);
    }
    out.push_back('\n');
  }
  bytes::write_file(path, out);
}

std::vector<std::vector<double>> read_pose_lines(const std::string& path, std::size_t dim) {
  const std::string text = bytes::read_file(path);
  std::vector<std::vector<double>> out;
  int lineno = 0;
  for (const std::string& line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(p, &end);
      if (end == p) {
        while (std::isspace(static_cast<unsigned char>(*p))) ++p;
        if (*p == '\0') break;
        throw IoError(path + ":" + std::to_string(lineno) + ": not a number near '" + p + "'");
      }
      if (errno == ERANGE) throw IoError(path + ":" + std::to_string(lineno) + ": number out of range");
      row.push_back(v);
      p = end;
    }
    if (row.empty()) continue;
    if (!out.empty() && row.size() != out.front().size())
      throw IoError(path + ":" + std::to_string(lineno) + ": ragged row, expected " +
                    std::to_string(out.front().size()) + " values, got " + std::to_string(row.size()));
    if (dim != 0 && row.size() != dim)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                    " values per line, got " + std::to_string(row.size()));
    out.push_back(std::move(row));
  }
  return out;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out = header;
  out.push_back('\n');
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      out.append(row[i]);
    }
    out.push_back('\n');
  }
  bytes::write_file(path, out);
}

}  // namespace stpose
