#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/training/loss.hpp"

namespace ccat::data {

struct UtteranceRecord {
  std::string id;
  std::filesystem::path path;
  double mos = 0.0;
  std::optional<double> ci95;
  std::vector<std::string> tags;  // first tag names the corpus

  std::string corpus() const { return tags.empty() ? std::string("default") : tags.front(); }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& s, const std::string& what, int line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses manifest CSV text with header `id,path,mos[,ci95][,tags]`. Tags are
/// ';'-separated. Lines starting with '#' and blank lines are ignored.
/// Relative paths are resolved against `base_dir`.
inline std::vector<UtteranceRecord> parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    header = detail::split(t, ',');
    for (auto& h : header) h = detail::trim(h);
    break;
  }
  if (header.size() < 3 || header[0] != "id" || header[1] != "path" || header[2] != "mos")
    throw ParseError("line " + std::to_string(lineno) + ": header must start with id,path,mos");
  int ci_col = -1, tags_col = -1;
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c] == "ci95" && ci_col < 0) ci_col = static_cast<int>(c);
    else if (header[c] == "tags" && tags_col < 0) tags_col = static_cast<int>(c);
    else throw ParseError("line " + std::to_string(lineno) + ": unexpected column '" + header[c] + "'");
  }

  std::vector<UtteranceRecord> records;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = detail::split(t, ',');
    if (cells.size() < 3 || cells.size() > header.size())
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " columns, got " + std::to_string(cells.size()));
    for (auto& c : cells) c = detail::trim(c);
    UtteranceRecord r;
    r.id = cells[0];
    if (r.id.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty id");
    if (!seen.insert(r.id).second) throw ParseError("line " + std::to_string(lineno) + ": duplicate id '" + r.id + "'");
    if (cells[1].empty()) throw ParseError("line " + std::to_string(lineno) + ": empty path");
    r.path = cells[1];
    if (r.path.is_relative() && !base_dir.empty()) r.path = base_dir / r.path;
    r.mos = detail::parse_real(cells[2], "mos", lineno);
    try {
      training::check_label(r.mos);
    } catch (const LabelError& e) {
      throw LabelError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (ci_col >= 0 && static_cast<std::size_t>(ci_col) < cells.size() && !cells[static_cast<std::size_t>(ci_col)].empty()) {
      r.ci95 = detail::parse_real(cells[static_cast<std::size_t>(ci_col)], "ci95", lineno);
      if (*r.ci95 < 0.0) throw ParseError("line " + std::to_string(lineno) + ": negative ci95");
    }
    if (tags_col >= 0 && static_cast<std::size_t>(tags_col) < cells.size()) {
      for (auto& tag : detail::split(cells[static_cast<std::size_t>(tags_col)], ';')) {
        tag = detail::trim(tag);
        if (!tag.empty()) r.tags.push_back(tag);
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  return parse_manifest(in, std::filesystem::absolute(path).parent_path());
}

inline void write_manifest(std::ostream& out, const std::vector<UtteranceRecord>& records,
                           const std::string& comment = {}) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "id,path,mos,ci95,tags\n";
  for (const auto& r : records) {
    char mos[32];
    std::snprintf(mos, sizeof mos, "%.17g", r.mos);
    out << r.id << ',' << r.path.string() << ',' << mos << ',';
    if (r.ci95) {
      char ci[32];
      std::snprintf(ci, sizeof ci, "%.17g", *r.ci95);
      out << ci;
    }
    out << ',';
    for (std::size_t i = 0; i < r.tags.size(); ++i) out << (i ? ";" : "") << r.tags[i];
    out << '\n';
  }
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records,
                           const std::string& comment = {}) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write manifest " + path.string());
  write_manifest(out, records, comment);
}

}  // namespace ccat::data
