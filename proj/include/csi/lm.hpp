#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csi/catalog.hpp"
#include "csi/domain.hpp"
#include "csi/reports.hpp"

namespace csi {

// The three agent capabilities a language model provides. Implementations
// must be safe to call concurrently from several rooms and may throw
// BackendError (or anything else) on failure; callers go through the
// *_or_degrade wrappers below.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual ObserverReport distill_dialog(const DialogBlock& block,
                                        const SuggestionCatalog& catalog) = 0;

  virtual std::vector<PreferenceLabel> label_preferences(const DialogBlock& block,
                                                         const SuggestionCatalog& catalog,
                                                         const Roster& roster) = 0;

  // Returns nullopt for an empty report.
  virtual std::optional<std::string> phrase_surrogate(const ObserverReport& report,
                                                      SurrogateMode mode,
                                                      std::string_view source_room_name) = 0;
};

// Deterministic marker-grammar backend (see markers.hpp). A pure function of
// its inputs.
class MockLanguageModel final : public LanguageModel {
 public:
  ObserverReport distill_dialog(const DialogBlock& block, const SuggestionCatalog& catalog) override;
  std::vector<PreferenceLabel> label_preferences(const DialogBlock& block,
                                                 const SuggestionCatalog& catalog,
                                                 const Roster& roster) override;
  std::optional<std::string> phrase_surrogate(const ObserverReport& report, SurrogateMode mode,
                                              std::string_view source_room_name) override;
};

// Template phrasing shared by the mock and the HTTP fallback. Embeds one
// RELAY(item) marker per entry.
std::optional<std::string> template_surrogate_text(const ObserverReport& report, SurrogateMode mode,
                                                   std::string_view source_room_name);

// Empty blocks return an empty report without calling the backend. Backend
// failures yield a degraded empty report. Entries are validated (invalid
// stances dropped), duplicate (item, kind) pairs merged, evidence restricted
// to the block and first_evidence_at_ms filled in.
ObserverReport distill_or_degrade(LanguageModel& backend, const DialogBlock& block,
                                  const SuggestionCatalog& catalog);

// Labels for non-roster participants or out-of-range strengths are dropped;
// backend failures yield no labels.
std::vector<PreferenceLabel> labels_or_degrade(LanguageModel& backend, const DialogBlock& block,
                                               const SuggestionCatalog& catalog,
                                               const Roster& roster);

// Falls back to template_surrogate_text when the backend fails.
std::optional<std::string> phrase_or_fallback(LanguageModel& backend, const ObserverReport& report,
                                              SurrogateMode mode, std::string_view source_room_name);

}  // namespace csi
