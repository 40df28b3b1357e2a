#pragma once

// Batch net-preference computation over a dense participant x item matrix.
// Plain strings and doubles only; no library types.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

struct Vote {
  std::string user;
  std::string item;  // item key
  int strength = 0;
  std::int64_t at_ms = 0;
};

struct ItemInfo {
  std::string key;
  std::string label;
  std::int64_t first_proposed_at_ms = 0;
};

struct BatchResult {
  std::map<std::string, std::int64_t> sums;  // item key -> column sum
  std::map<std::string, double> nets;
  std::optional<std::string> winner;  // item key
  std::string tie_break = "none";
};

// Votes are in emission order; among equal timestamps the later one wins.
inline BatchResult batch_preferences(const std::vector<std::string>& roster, const std::vector<ItemInfo>& items,
                                     std::vector<Vote> votes) {
  std::map<std::string, std::size_t> user_index, item_index;
  for (std::size_t i = 0; i < roster.size(); ++i) user_index[roster[i]] = i;
  for (std::size_t j = 0; j < items.size(); ++j) item_index[items[j].key] = j;

  std::vector<std::vector<int>> matrix(roster.size(), std::vector<int>(items.size(), 0));
  std::stable_sort(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) { return a.at_ms < b.at_ms; });
  for (const auto& v : votes) {
    auto u = user_index.find(v.user);
    auto it = item_index.find(v.item);
    if (u == user_index.end() || it == item_index.end()) continue;
    matrix[u->second][it->second] = v.strength;
  }

  BatchResult out;
  std::vector<double> nets(items.size(), 0.0);
  for (std::size_t j = 0; j < items.size(); ++j) {
    std::int64_t column = 0;
    for (std::size_t i = 0; i < roster.size(); ++i) column += matrix[i][j];
    out.sums[items[j].key] = column;
    nets[j] = static_cast<double>(column) / static_cast<double>(roster.size());
    out.nets[items[j].key] = nets[j];
  }
  if (items.empty()) return out;

  const double best = *std::max_element(nets.begin(), nets.end());
  std::vector<std::size_t> tied;
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (nets[j] == best) tied.push_back(j);
  }
  if (tied.size() == 1) {
    out.winner = items[tied[0]].key;
    return out;
  }
  std::int64_t earliest = INT64_MAX;
  for (auto j : tied) earliest = std::min(earliest, items[j].first_proposed_at_ms);
  std::vector<std::size_t> senior;
  for (auto j : tied) {
    if (items[j].first_proposed_at_ms == earliest) senior.push_back(j);
  }
  if (senior.size() == 1) {
    out.winner = items[senior[0]].key;
    out.tie_break = "first_proposed";
    return out;
  }
  std::size_t pick = senior[0];
  for (auto j : senior) {
    if (items[j].label < items[pick].label) pick = j;
  }
  out.winner = items[pick].key;
  out.tie_break = "label";
  return out;
}

}  // namespace oracle
