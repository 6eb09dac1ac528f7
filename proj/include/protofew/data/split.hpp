#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace protofew::data {

enum class Section { Train, Val, Test };

Section parse_section(const std::string& name);
const char* section_name(Section section);

/// Class lists per section, pairwise disjoint. Rows that name a file also
/// record it under the class so loaders can restrict to listed images.
struct ClassSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::map<std::string, std::vector<std::string>> files;

  const std::vector<std::string>& classes(Section section) const;
  std::vector<std::string>& classes(Section section);
};

/// CSV with header `filename,label,section`; `filename` may be empty for a
/// class-only row. Throws ValidationError listing every class that appears
/// in more than one section, with the line numbers involved.
ClassSplit parse_split(std::istream& in, const std::string& source = "<split>");
ClassSplit load_split(const std::filesystem::path& path);
void write_split(const ClassSplit& split, const std::filesystem::path& path);

}  // namespace protofew::data
