#pragma once

// Standalone reading of the mock marker grammar with std::regex, written
// without looking at the production scanner.
//
//   PROPOSE(item) | PROPOSE(item, s) | SUPPORT(item, s) | OPPOSE(item, s) | RELAY(item)
//   s in 1..3, keyword not preceded by a letter, digit or underscore.

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>
#include <vector>

namespace oracle {

struct Mark {
  std::string kind;  // "PROPOSE", "SUPPORT", "OPPOSE", "RELAY"
  std::string item;  // trimmed
  int signed_strength = 0;

  bool operator==(const Mark&) const = default;
};

inline std::string strip(const std::string& s) {
  static const std::regex edges(R"(^\s+|\s+$)");
  return std::regex_replace(s, edges, "");
}

inline std::string fold(const std::string& s) {
  std::string out = strip(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::vector<Mark> scan_marks(const std::string& body) {
  static const std::regex candidate(R"((PROPOSE|SUPPORT|OPPOSE|RELAY)\(([^()]*)\))");
  static const std::regex one_arg(R"(^\s*([^,]*?)\s*$)");
  static const std::regex two_args(R"(^\s*([^,]*?)\s*,\s*([1-3])\s*$)");

  std::vector<Mark> out;
  std::size_t offset = 0;
  std::smatch m;
  while (offset < body.size()) {
    auto begin = body.cbegin() + static_cast<std::ptrdiff_t>(offset);
    if (!std::regex_search(begin, body.cend(), m, candidate)) break;
    const std::size_t at = offset + static_cast<std::size_t>(m.position(0));
    const bool boundary = at == 0 || !(std::isalnum(static_cast<unsigned char>(body[at - 1])) || body[at - 1] == '_');
    if (!boundary) {
      offset = at + 1;
      continue;
    }
    const std::string kind = m[1];
    const std::string args = m[2];
    std::smatch a;
    bool ok = false;
    Mark mark{kind, "", 0};
    if (std::regex_match(args, a, two_args) && kind != "RELAY") {
      mark.item = a[1];
      const int s = std::stoi(a[2]);
      mark.signed_strength = kind == "OPPOSE" ? -s : s;
      ok = true;
    } else if (std::regex_match(args, a, one_arg) && (kind == "PROPOSE" || kind == "RELAY")) {
      mark.item = a[1];
      mark.signed_strength = 1;
      ok = true;
    }
    if (ok && !mark.item.empty()) {
      out.push_back(mark);
      offset = at + static_cast<std::size_t>(m.length(0));
    } else {
      offset = at + 1;
    }
  }
  return out;
}

}  // namespace oracle
