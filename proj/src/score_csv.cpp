#include "mdmf/score_csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "mdmf/errors.hpp"

namespace mdmf {

namespace {

constexpr std::string_view kHeader = "source_id,score,label";

FormatError bad(std::size_t line, const std::string& what) {
  return FormatError(FormatError::Kind::invalid, "score CSV line " + std::to_string(line) + ": " + what);
}

void append_field(std::string& out, const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

}  // namespace

Label parse_label(std::string_view text) {
  if (text == "real") return Label::real;
  if (text == "generated") return Label::generated;
  throw FormatError(FormatError::Kind::invalid, "unknown label '" + std::string(text) + "'");
}

std::string write_score_csv(const std::vector<ScoreRow>& rows) {
  std::string out(kHeader);
  out += '\n';
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    append_field(out, r.source_id);
    out += ',';
    out += buf;
    out += ',';
    out += to_string(r.label);
    out += '\n';
  }
  return out;
}

std::vector<ScoreRow> parse_score_csv(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line = 1;
  auto read_line_end = [&]() {
    if (pos < text.size() && text[pos] == '\r') ++pos;
    if (pos < text.size() && text[pos] == '\n') ++pos;
  };
  const auto header_end = text.find_first_of("\r\n");
  if (text.substr(0, header_end) != kHeader) throw bad(1, "expected header 'source_id,score,label'");
  pos = header_end == std::string_view::npos ? text.size() : header_end;
  read_line_end();

  std::vector<ScoreRow> rows;
  while (pos < text.size()) {
    ++line;
    std::vector<std::string> fields;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (pos < text.size() && text[pos] == '"') {
        ++pos;
        for (;;) {
          if (pos >= text.size()) throw bad(line, "unterminated quoted field");
          if (text[pos] == '"') {
            if (pos + 1 < text.size() && text[pos + 1] == '"') {
              field += '"';
              pos += 2;
              continue;
            }
            ++pos;
            break;
          }
          field += text[pos++];
        }
      } else {
        while (pos < text.size() && text[pos] != ',' && text[pos] != '\n' && text[pos] != '\r') field += text[pos++];
      }
      fields.push_back(field);
      if (pos < text.size() && text[pos] == ',') {
        ++pos;
      } else if (pos >= text.size() || text[pos] == '\n' || text[pos] == '\r') {
        read_line_end();
        done = true;
      } else {
        throw bad(line, "unexpected character after quoted field");
      }
    }
    if (fields.size() != 3) throw bad(line, "expected 3 fields, found " + std::to_string(fields.size()));
    ScoreRow row;
    row.source_id = fields[0];
    const auto& s = fields[1];
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), row.score);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) throw bad(line, "unparsable score '" + s + "'");
    if (!std::isfinite(row.score)) throw bad(line, "non-finite score");
    try {
      row.label = parse_label(fields[2]);
    } catch (const FormatError& e) {
      throw bad(line, e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mdmf
