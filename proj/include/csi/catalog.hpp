#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csi/ids.hpp"
#include "csi/json.hpp"
#include "csi/reports.hpp"

namespace csi {

struct CatalogItem {
  ItemId id;
  std::string canonical_label;  // normalized
  std::set<std::string> aliases;  // normalized, includes canonical_label
  TimeMs first_proposed_at_ms = 0;
  RoomId first_room;

  bool operator==(const CatalogItem&) const = default;
};

struct CatalogDelta {
  enum class Kind { minted, merged, earlier_evidence, alias_added };
  Kind kind = Kind::merged;
  ItemId item;
  std::string text;
  TimeMs at_ms = 0;
  RoomId room;

  bool operator==(const CatalogDelta&) const = default;
};

std::string to_string(CatalogDelta::Kind kind);

// Session-global registry of suggestions. Items are minted in mention order
// with ids "item-1", "item-2", ...
class SuggestionCatalog {
 public:
  const std::vector<CatalogItem>& items() const { return items_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }

  const CatalogItem* find(const ItemId& id) const;
  // Lookup by any alias after normalization.
  const CatalogItem* find_alias(std::string_view text) const;

  // Resolves `item` to a catalog entry, minting one when the text is new.
  // Evidence earlier than the stored first proposal moves it back.
  // A known id paired with unseen text records the text as an alias.
  // Appends what changed to `deltas`.
  ItemId mention(const ItemRef& item, TimeMs at_ms, RoomId room, std::vector<CatalogDelta>& deltas);

  bool operator==(const SuggestionCatalog& other) const { return items_ == other.items_; }

 private:
  CatalogItem* find_mutable(const ItemId& id);

  std::vector<CatalogItem> items_;
  std::map<std::string, std::size_t, std::less<>> alias_index_;
};

Json to_json(const SuggestionCatalog& catalog);

// Running signed conviction per (item, reporting room) and per item.
class ConvictionLedger {
 public:
  struct Cell {
    std::int64_t sum = 0;
    std::int64_t entries = 0;
    bool operator==(const Cell&) const = default;
  };

  void record(const ItemId& item, RoomId room, int conviction);

  Cell cell(const ItemId& item, RoomId room) const;
  std::int64_t global(const ItemId& item) const;
  const std::map<std::pair<ItemId, RoomId>, Cell>& cells() const { return cells_; }
  const std::map<ItemId, std::int64_t>& totals() const { return totals_; }

  bool operator==(const ConvictionLedger&) const = default;

 private:
  std::map<std::pair<ItemId, RoomId>, Cell> cells_;
  std::map<ItemId, std::int64_t> totals_;
};

Json to_json(const ConvictionLedger& ledger);

// Resolves every entry of `report` against the catalog (filling entry ids),
// mints new items and adds each entry's conviction to the ledger.
std::vector<CatalogDelta> update_catalog(ObserverReport& report, SuggestionCatalog& catalog,
                                         ConvictionLedger& ledger);

}  // namespace csi
