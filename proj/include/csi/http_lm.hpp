#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "csi/json.hpp"
#include "csi/lm.hpp"

namespace csi {

struct HttpBackendOptions {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::chrono::milliseconds timeout{20000};
  std::string prompt_dir;  // holds distill.txt, label.txt, surrogate.txt

  // Reads LM_ENDPOINT, LM_API_KEY, LM_MODEL (and LM_PROMPT_DIR). Returns
  // nullopt when LM_ENDPOINT is unset.
  static std::optional<HttpBackendOptions> from_environment();
};

// Prompt files are plain text with {{question}}, {{dialog}} and {{catalog}}
// placeholders.
struct PromptTemplates {
  std::string distill;
  std::string label;
  std::string surrogate;

  static PromptTemplates load(const std::string& dir);
};

std::string render_prompt(const std::string& tmpl, const std::string& question,
                          const std::string& dialog, const std::string& catalog);
std::string render_dialog(const DialogBlock& block);
std::string render_catalog(const SuggestionCatalog& catalog);

// Pulls the single JSON object out of a completion: an OpenAI-style
// envelope is unwrapped, fenced ```json blocks are preferred, otherwise the
// outermost {...} span is parsed. Throws BackendError when none parses.
Json extract_json_object(const std::string& response_body);

// Schema checks for backend output. Items failing validation are dropped
// (and logged); structural errors throw BackendError.
ObserverReport parse_distill_response(const Json& json, const DialogBlock& block,
                                      const SuggestionCatalog& catalog);
std::vector<PreferenceLabel> parse_label_response(const Json& json, const DialogBlock& block,
                                                  const SuggestionCatalog& catalog,
                                                  const Roster& roster);
std::string parse_surrogate_response(const Json& json);

// Chat-completions backend: POST {model, messages:[{role, content}],
// temperature} to a single endpoint.
class HttpLanguageModel final : public LanguageModel {
 public:
  HttpLanguageModel(HttpBackendOptions options, PromptTemplates prompts, std::string question);

  ObserverReport distill_dialog(const DialogBlock& block, const SuggestionCatalog& catalog) override;
  std::vector<PreferenceLabel> label_preferences(const DialogBlock& block,
                                                 const SuggestionCatalog& catalog,
                                                 const Roster& roster) override;
  std::optional<std::string> phrase_surrogate(const ObserverReport& report, SurrogateMode mode,
                                              std::string_view source_room_name) override;

  // Request document sent for a prompt; exposed for tests.
  Json build_request(const std::string& system_prompt, const std::string& user_content) const;

 private:
  std::string complete(const std::string& system_prompt, const std::string& user_content);

  HttpBackendOptions options_;
  PromptTemplates prompts_;
  std::string question_;
  std::string scheme_host_;
  std::string path_;
};

}  // namespace csi
