#pragma once

#include <string>
#include <vector>

#include "csi/domain.hpp"
#include "csi/error.hpp"
#include "csi/lm.hpp"
#include "csi/reports.hpp"

namespace testing_support {

inline std::vector<csi::ParticipantId> people(const std::string& prefix, std::size_t n) {
  std::vector<csi::ParticipantId> out;
  for (std::size_t i = 1; i <= n; ++i) {
    std::string num = std::to_string(i);
    if (num.size() < 2) num = "0" + num;
    out.emplace_back(prefix + num);
  }
  return out;
}

inline csi::Message human(std::uint64_t id, std::uint32_t room, const std::string& who, std::string body,
                          csi::TimeMs at) {
  return {csi::MessageId{id}, csi::RoomId{room}, csi::Author::human(csi::ParticipantId{who}), std::move(body), at};
}

inline csi::Message agent(std::uint64_t id, std::uint32_t room, csi::AuthorKind kind, std::string body,
                          csi::TimeMs at) {
  csi::Author author = kind == csi::AuthorKind::observer_agent ? csi::Author::observer(csi::RoomId{room})
                                                               : csi::Author::surrogate(csi::RoomId{room});
  return {csi::MessageId{id}, csi::RoomId{room}, author, std::move(body), at};
}

// Backend whose every call throws.
class BrokenModel final : public csi::LanguageModel {
 public:
  csi::ObserverReport distill_dialog(const csi::DialogBlock&, const csi::SuggestionCatalog&) override {
    throw csi::BackendError("backend down");
  }
  std::vector<csi::PreferenceLabel> label_preferences(const csi::DialogBlock&, const csi::SuggestionCatalog&,
                                                      const csi::Roster&) override {
    throw csi::BackendError("backend down");
  }
  std::optional<std::string> phrase_surrogate(const csi::ObserverReport&, csi::SurrogateMode,
                                              std::string_view) override {
    throw csi::BackendError("backend down");
  }
};

// Returns canned outputs, counting calls.
class CannedModel final : public csi::LanguageModel {
 public:
  csi::ObserverReport report;
  std::vector<csi::PreferenceLabel> labels;
  std::optional<std::string> text;
  int calls = 0;

  csi::ObserverReport distill_dialog(const csi::DialogBlock&, const csi::SuggestionCatalog&) override {
    ++calls;
    return report;
  }
  std::vector<csi::PreferenceLabel> label_preferences(const csi::DialogBlock&, const csi::SuggestionCatalog&,
                                                      const csi::Roster&) override {
    ++calls;
    return labels;
  }
  std::optional<std::string> phrase_surrogate(const csi::ObserverReport&, csi::SurrogateMode,
                                              std::string_view) override {
    ++calls;
    return text;
  }
};

}  // namespace testing_support
