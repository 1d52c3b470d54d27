#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stpose/common.hpp"

namespace stpose {

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// ignored, whitespace around key and value trimmed. Returned in file order;
// consumers decide how duplicates are treated (conventionally last wins).
std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_kv_file(const std::string& path);

// Strict numeric parsing; `what` names the field in the error message.
long long parse_ll(const std::string& s, const std::string& what);
double parse_double(const std::string& s, const std::string& what);

// Shortest round-trip-safe decimal for doubles ("%.17g" trimmed via %g9 first
// is not; this prints with enough digits to reparse equal).
std::string format_double(double v);

// Prediction and truth files: one frame per line, 3K space-separated decimals
// printed with %.9g (enough for exact float32 round-trip).
void write_pose_lines(const std::string& path, const std::vector<std::vector<double>>& poses);

// dim 0 accepts any consistent width; otherwise every line must hold exactly
// `dim` numbers. Ragged input is an error either way.
std::vector<std::vector<double>> read_pose_lines(const std::string& path, std::size_t dim);

// Minimal CSV emission: header once, then rows; fields joined with commas. No
// quoting because no producer in this project emits commas inside fields.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace stpose
