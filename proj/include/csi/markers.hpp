#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace csi {

// Stance markers understood by the mock backend:
//   PROPOSE(item)        strength 1
//   PROPOSE(item, s)     s in 1..3
//   SUPPORT(item, s)
//   OPPOSE(item, s)
//   RELAY(item)          emitted by surrogate agents only
// Malformed markers are skipped. Item text may not contain ',', '(' or ')'.
enum class MarkerKind { propose, support, oppose, relay };

struct Marker {
  MarkerKind kind = MarkerKind::propose;
  std::string item;  // trimmed, original case
  int strength = 1;  // 1..3; always 1 for relay

  // +strength for propose/support/relay, -strength for oppose.
  int signed_strength() const { return kind == MarkerKind::oppose ? -strength : strength; }

  bool operator==(const Marker&) const = default;
};

std::string to_string(MarkerKind kind);

// Markers in order of appearance.
std::vector<Marker> parse_markers(std::string_view body);

// Canonical text for a marker; parse_markers(render_marker(m)) == {m}.
std::string render_marker(const Marker& marker);

// Identity key for item text: whitespace-trimmed, ASCII case-folded.
std::string normalize_item(std::string_view text);

std::string_view trim(std::string_view text);

}  // namespace csi
