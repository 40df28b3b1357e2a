#include "csi/catalog.hpp"

#include "csi/error.hpp"
#include "csi/markers.hpp"

namespace csi {

std::string to_string(CatalogDelta::Kind kind) {
  switch (kind) {
    case CatalogDelta::Kind::minted: return "minted";
    case CatalogDelta::Kind::merged: return "merged";
    case CatalogDelta::Kind::earlier_evidence: return "earlier_evidence";
    case CatalogDelta::Kind::alias_added: return "alias_added";
  }
  return "?";
}

const CatalogItem* SuggestionCatalog::find(const ItemId& id) const {
  for (const auto& item : items_) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

CatalogItem* SuggestionCatalog::find_mutable(const ItemId& id) {
  return const_cast<CatalogItem*>(std::as_const(*this).find(id));
}

const CatalogItem* SuggestionCatalog::find_alias(std::string_view text) const {
  auto it = alias_index_.find(normalize_item(text));
  return it == alias_index_.end() ? nullptr : &items_[it->second];
}

ItemId SuggestionCatalog::mention(const ItemRef& ref, TimeMs at_ms, RoomId room,
                                  std::vector<CatalogDelta>& deltas) {
  const std::string key = normalize_item(ref.text);
  CatalogItem* item = nullptr;
  if (ref.id) {
    item = find_mutable(*ref.id);
    if (item == nullptr) throw Error("reference to unknown catalog item " + ref.id->value());
    if (!key.empty() && !alias_index_.contains(key)) {
      item->aliases.insert(key);
      alias_index_.emplace(key, static_cast<std::size_t>(item - items_.data()));
      deltas.push_back({CatalogDelta::Kind::alias_added, item->id, key, at_ms, room});
    }
  } else {
    if (key.empty()) throw Error("empty item text");
    if (auto it = alias_index_.find(key); it != alias_index_.end()) {
      item = &items_[it->second];
    }
  }

  if (item == nullptr) {
    CatalogItem minted;
    minted.id = ItemId{"item-" + std::to_string(items_.size() + 1)};
    minted.canonical_label = key;
    minted.aliases.insert(key);
    minted.first_proposed_at_ms = at_ms;
    minted.first_room = room;
    alias_index_.emplace(key, items_.size());
    items_.push_back(std::move(minted));
    deltas.push_back({CatalogDelta::Kind::minted, items_.back().id, key, at_ms, room});
    return items_.back().id;
  }

  if (at_ms < item->first_proposed_at_ms) {
    item->first_proposed_at_ms = at_ms;
    item->first_room = room;
    deltas.push_back({CatalogDelta::Kind::earlier_evidence, item->id, key, at_ms, room});
  } else if (!ref.id) {
    deltas.push_back({CatalogDelta::Kind::merged, item->id, key, at_ms, room});
  }
  return item->id;
}

Json to_json(const SuggestionCatalog& catalog) {
  Json items = Json::array();
  for (const auto& item : catalog.items()) {
    Json aliases = Json::array();
    for (const auto& a : item.aliases) aliases.push_back(a);
    items.push_back(Json{{"item_id", item.id.value()},
                         {"canonical_label", item.canonical_label},
                         {"aliases", std::move(aliases)},
                         {"first_proposed_at_ms", item.first_proposed_at_ms},
                         {"first_room", room_key(item.first_room)}});
  }
  return items;
}

void ConvictionLedger::record(const ItemId& item, RoomId room, int conviction) {
  auto& cell = cells_[{item, room}];
  cell.sum += conviction;
  cell.entries += 1;
  totals_[item] += conviction;
}

ConvictionLedger::Cell ConvictionLedger::cell(const ItemId& item, RoomId room) const {
  auto it = cells_.find({item, room});
  return it == cells_.end() ? Cell{} : it->second;
}

std::int64_t ConvictionLedger::global(const ItemId& item) const {
  auto it = totals_.find(item);
  return it == totals_.end() ? 0 : it->second;
}

Json to_json(const ConvictionLedger& ledger) {
  Json cells = Json::array();
  for (const auto& [key, cell] : ledger.cells()) {
    cells.push_back(Json{{"item_id", key.first.value()},
                         {"room", room_key(key.second)},
                         {"sum", cell.sum},
                         {"entries", cell.entries}});
  }
  Json totals = Json::object();
  for (const auto& [item, sum] : ledger.totals()) totals[item.value()] = sum;
  return Json{{"cells", std::move(cells)}, {"totals", std::move(totals)}};
}

std::vector<CatalogDelta> update_catalog(ObserverReport& report, SuggestionCatalog& catalog,
                                         ConvictionLedger& ledger) {
  std::vector<CatalogDelta> deltas;
  for (auto& entry : report.entries) {
    const ItemId id = catalog.mention(entry.item, entry.first_evidence_at_ms, report.room, deltas);
    entry.item.id = id;
    ledger.record(id, report.room, entry.conviction);
  }
  return deltas;
}

}  // namespace csi
