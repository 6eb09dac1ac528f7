#include "protofew/data/split.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "protofew/errors.hpp"

namespace protofew::data {

Section parse_section(const std::string& name) {
  if (name == "train") return Section::Train;
  if (name == "val") return Section::Val;
  if (name == "test") return Section::Test;
  throw ValidationError("unknown split section '" + name + "' (expected train, val or test)");
}

const char* section_name(Section section) {
  switch (section) {
    case Section::Train: return "train";
    case Section::Val: return "val";
    case Section::Test: return "test";
  }
  return "?";
}

const std::vector<std::string>& ClassSplit::classes(Section s) const {
  return s == Section::Train ? train : s == Section::Val ? val : test;
}

std::vector<std::string>& ClassSplit::classes(Section s) {
  return s == Section::Train ? train : s == Section::Val ? val : test;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  if (quoted) throw ValidationError(where + ": unterminated quote");
  return fields;
}

}  // namespace

ClassSplit parse_split(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  ClassSplit split;
  // First line at which each (class, section) pair appears.
  std::map<std::string, std::map<Section, std::size_t>> seen;
  std::map<std::string, std::set<std::string>> files_seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty() || line == "\r") continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_csv_line(line, where);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"filename", "label", "section"}) {
        throw ValidationError(where + ": expected header 'filename,label,section'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ValidationError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
    }
    const std::string& file = fields[0];
    const std::string& label = fields[1];
    if (label.empty()) throw ValidationError(where + ": empty label");
    Section section;
    try {
      section = parse_section(fields[2]);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    auto& sections = seen[label];
    if (sections.emplace(section, line_no).second) split.classes(section).push_back(label);
    if (!file.empty() && files_seen[label].insert(file).second) split.files[label].push_back(file);
  }
  if (!header_seen) throw ValidationError(source + ": empty split file");

  std::ostringstream offenders;
  std::size_t n_bad = 0;
  for (const auto& [label, sections] : seen) {
    if (sections.size() < 2) continue;
    if (n_bad++) offenders << "; ";
    offenders << "'" << label << "' in";
    for (const auto& [section, first_line] : sections) {
      offenders << ' ' << section_name(section) << " (line " << first_line << ")";
    }
  }
  if (n_bad) {
    throw ValidationError(source + ": classes shared across sections: " + offenders.str());
  }
  return split;
}

ClassSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open split file " + path.string());
  return parse_split(in, path.string());
}

void write_split(const ClassSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write split file " + path.string());
  out << "filename,label,section\n";
  for (Section s : {Section::Train, Section::Val, Section::Test}) {
    for (const auto& label : split.classes(s)) {
      const auto it = split.files.find(label);
      if (it == split.files.end() || it->second.empty()) {
        out << ',' << label << ',' << section_name(s) << '\n';
        continue;
      }
      for (const auto& f : it->second) out << f << ',' << label << ',' << section_name(s) << '\n';
    }
  }
}

}  // namespace protofew::data
