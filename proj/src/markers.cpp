#include "csi/markers.hpp"

#include <array>
#include <cctype>
#include <optional>

namespace csi {

namespace {

struct Keyword {
  std::string_view text;
  MarkerKind kind;
};

constexpr std::array<Keyword, 4> kKeywords = {{
    {"PROPOSE", MarkerKind::propose},
    {"SUPPORT", MarkerKind::support},
    {"OPPOSE", MarkerKind::oppose},
    {"RELAY", MarkerKind::relay},
}};

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::optional<int> parse_strength(std::string_view text) {
  text = trim(text);
  if (text.size() != 1 || text[0] < '1' || text[0] > '3') return std::nullopt;
  return text[0] - '0';
}

// Interprets the text between the parentheses.
std::optional<Marker> parse_arguments(MarkerKind kind, std::string_view args) {
  if (args.find('(') != std::string_view::npos) return std::nullopt;
  const auto comma = args.find(',');
  const std::string_view item = trim(args.substr(0, comma));
  if (item.empty()) return std::nullopt;

  Marker marker{kind, std::string(item), 1};
  if (comma == std::string_view::npos) {
    if (kind == MarkerKind::support || kind == MarkerKind::oppose) return std::nullopt;
    return marker;
  }
  if (kind == MarkerKind::relay) return std::nullopt;
  const std::string_view rest = args.substr(comma + 1);
  if (rest.find(',') != std::string_view::npos) return std::nullopt;
  const auto strength = parse_strength(rest);
  if (!strength) return std::nullopt;
  marker.strength = *strength;
  return marker;
}

}  // namespace

std::string to_string(MarkerKind kind) {
  for (const auto& k : kKeywords) {
    if (k.kind == kind) return std::string(k.text);
  }
  return "?";
}

std::string_view trim(std::string_view text) {
  const auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && space(text.front())) text.remove_prefix(1);
  while (!text.empty() && space(text.back())) text.remove_suffix(1);
  return text;
}

std::string normalize_item(std::string_view text) {
  std::string out(trim(text));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<Marker> parse_markers(std::string_view body) {
  std::vector<Marker> markers;
  std::size_t pos = 0;
  while (pos < body.size()) {
    bool matched = false;
    if (pos == 0 || !is_word_char(body[pos - 1])) {
      for (const auto& keyword : kKeywords) {
        if (body.compare(pos, keyword.text.size(), keyword.text) != 0) continue;
        const std::size_t open = pos + keyword.text.size();
        if (open >= body.size() || body[open] != '(') continue;
        const std::size_t close = body.find(')', open + 1);
        if (close == std::string_view::npos) continue;
        if (auto marker = parse_arguments(keyword.kind, body.substr(open + 1, close - open - 1))) {
          markers.push_back(std::move(*marker));
          pos = close + 1;
          matched = true;
        }
        break;
      }
    }
    if (!matched) ++pos;
  }
  return markers;
}

std::string render_marker(const Marker& marker) {
  std::string out = to_string(marker.kind) + "(" + marker.item;
  if (marker.kind != MarkerKind::relay) out += ", " + std::to_string(marker.strength);
  return out + ")";
}

}  // namespace csi
