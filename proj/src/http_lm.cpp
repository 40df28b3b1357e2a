#include "csi/http_lm.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <httplib.h>

#include "csi/error.hpp"
#include "csi/log.hpp"
#include "csi/markers.hpp"

#ifndef CSI_DEFAULT_PROMPT_DIR
#define CSI_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace csi {

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value != nullptr && *value != '\0' ? std::string(value) : fallback;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read prompt template " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void replace_all(std::string& text, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::optional<Json> try_parse(std::string_view text) {
  auto json = Json::parse(text.begin(), text.end(), nullptr, false);
  if (json.is_discarded()) return std::nullopt;
  return json;
}

std::string author_label(const Author& author) {
  switch (author.kind) {
    case AuthorKind::participant: return author.participant.value();
    case AuthorKind::observer_agent: return "observer-agent";
    case AuthorKind::surrogate_agent: return "surrogate-agent";
  }
  return "?";
}

ItemRef item_from(const Json& entry, const SuggestionCatalog& catalog) {
  ItemRef ref;
  ref.text = entry.at("item").get<std::string>();
  if (entry.contains("item_id") && entry["item_id"].is_string()) {
    ItemId id{entry["item_id"].get<std::string>()};
    if (catalog.find(id) != nullptr) ref.id = id;
  }
  if (!ref.id) {
    if (const auto* item = catalog.find_alias(ref.text)) ref.id = item->id;
  }
  return ref;
}

}  // namespace

std::optional<HttpBackendOptions> HttpBackendOptions::from_environment() {
  const std::string endpoint = env_or("LM_ENDPOINT", "");
  if (endpoint.empty()) return std::nullopt;
  HttpBackendOptions options;
  options.endpoint = endpoint;
  options.api_key = env_or("LM_API_KEY", "");
  options.model = env_or("LM_MODEL", options.model);
  options.prompt_dir = env_or("LM_PROMPT_DIR", CSI_DEFAULT_PROMPT_DIR);
  return options;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  const std::string base = dir.empty() ? std::string(CSI_DEFAULT_PROMPT_DIR) : dir;
  return {read_file(base + "/distill.txt"), read_file(base + "/label.txt"),
          read_file(base + "/surrogate.txt")};
}

std::string render_prompt(const std::string& tmpl, const std::string& question,
                          const std::string& dialog, const std::string& catalog) {
  std::string out = tmpl;
  replace_all(out, "{{question}}", question);
  replace_all(out, "{{dialog}}", dialog);
  replace_all(out, "{{catalog}}", catalog);
  return out;
}

std::string render_dialog(const DialogBlock& block) {
  std::string out;
  for (const auto& m : block.messages) {
    out += "[" + std::to_string(m.id.value()) + "] " + author_label(m.author) + ": " + m.body + "\n";
  }
  return out;
}

std::string render_catalog(const SuggestionCatalog& catalog) {
  if (catalog.empty()) return "(no suggestions yet)\n";
  std::string out;
  for (const auto& item : catalog.items()) out += item.id.value() + ": " + item.canonical_label + "\n";
  return out;
}

Json extract_json_object(const std::string& body) {
  std::string content = body;
  if (auto envelope = try_parse(body); envelope && envelope->is_object()) {
    if (envelope->contains("choices")) {
      try {
        content = envelope->at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const std::exception&) {
        throw BackendError("completion envelope has no message content");
      }
    } else {
      return *envelope;
    }
  }

  const auto fence = content.find("```");
  if (fence != std::string::npos) {
    auto start = content.find('\n', fence);
    const auto end = start == std::string::npos ? std::string::npos : content.find("```", start);
    if (end != std::string::npos) {
      if (auto json = try_parse(std::string_view(content).substr(start + 1, end - start - 1));
          json && json->is_object()) {
        return *json;
      }
    }
  }
  const auto open = content.find('{');
  const auto close = content.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    if (auto json = try_parse(std::string_view(content).substr(open, close - open + 1));
        json && json->is_object()) {
      return *json;
    }
  }
  throw BackendError("no JSON object in backend response");
}

ObserverReport parse_distill_response(const Json& json, const DialogBlock& block,
                                      const SuggestionCatalog& catalog) {
  if (!json.contains("entries") || !json["entries"].is_array()) {
    throw BackendError("distill response lacks an entries array");
  }
  ObserverReport report{block.room, block.cycle_index, {}, {}, false};
  if (json.contains("summary") && json["summary"].is_string()) {
    report.summary_text = json["summary"].get<std::string>();
  }
  for (const auto& e : json["entries"]) {
    try {
      if (!e.at("conviction").is_number_integer()) throw Error("conviction must be an integer");
      StanceEntry entry;
      entry.item = item_from(e, catalog);
      entry.kind = parse_stance_kind(e.at("kind").get<std::string>());
      entry.conviction = e.at("conviction").get<int>();
      if (!is_valid_stance(entry.kind, entry.conviction)) throw Error("conviction out of range");
      if (e.contains("evidence") && e["evidence"].is_array()) {
        for (const auto& id : e["evidence"]) {
          if (id.is_number_unsigned()) entry.evidence.emplace_back(id.get<std::uint64_t>());
        }
      }
      report.entries.push_back(std::move(entry));
    } catch (const std::exception& ex) {
      log::warn(std::string("dropping distill entry: ") + ex.what());
    }
  }
  return report;
}

std::vector<PreferenceLabel> parse_label_response(const Json& json, const DialogBlock& block,
                                                  const SuggestionCatalog& catalog,
                                                  const Roster& roster) {
  if (!json.contains("labels") || !json["labels"].is_array()) {
    throw BackendError("label response lacks a labels array");
  }
  std::map<ParticipantId, TimeMs> last_spoke;
  for (const auto& m : block.messages) {
    if (m.author.is_human()) last_spoke[m.author.participant] = m.timestamp_ms;
  }
  std::vector<PreferenceLabel> labels;
  for (const auto& l : json["labels"]) {
    try {
      if (!l.at("strength").is_number_integer()) throw Error("strength must be an integer");
      PreferenceLabel label;
      label.participant = ParticipantId{l.at("participant").get<std::string>()};
      label.item = item_from(l, catalog);
      label.strength = l.at("strength").get<int>();
      if (label.strength < -3 || label.strength > 3) throw Error("strength out of range");
      if (std::find(roster.begin(), roster.end(), label.participant) == roster.end()) {
        throw Error("participant not in room roster");
      }
      auto spoke = last_spoke.find(label.participant);
      if (spoke == last_spoke.end()) throw Error("participant did not speak in this block");
      label.at_ms = spoke->second;
      labels.push_back(std::move(label));
    } catch (const std::exception& ex) {
      log::warn(std::string("dropping label: ") + ex.what());
    }
  }
  return labels;
}

std::string parse_surrogate_response(const Json& json) {
  if (!json.contains("text") || !json["text"].is_string()) {
    throw BackendError("surrogate response lacks a text field");
  }
  return json["text"].get<std::string>();
}

HttpLanguageModel::HttpLanguageModel(HttpBackendOptions options, PromptTemplates prompts,
                                     std::string question)
    : options_(std::move(options)), prompts_(std::move(prompts)), question_(std::move(question)) {
  const auto scheme_end = options_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error("LM endpoint must be an http(s) URL");
  const auto path_start = options_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = options_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : options_.endpoint.substr(path_start);
}

Json HttpLanguageModel::build_request(const std::string& system_prompt,
                                      const std::string& user_content) const {
  return Json{{"model", options_.model},
              {"messages", Json::array({Json{{"role", "system"}, {"content", system_prompt}},
                                        Json{{"role", "user"}, {"content", user_content}}})},
              {"temperature", options_.temperature}};
}

std::string HttpLanguageModel::complete(const std::string& system_prompt,
                                        const std::string& user_content) {
  httplib::Client client(scheme_host_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const auto result = client.Post(path_, headers, build_request(system_prompt, user_content).dump(),
                                  "application/json");
  if (!result) throw BackendError("LM request failed: " + httplib::to_string(result.error()));
  if (result->status != 200) {
    throw BackendError("LM endpoint returned HTTP " + std::to_string(result->status));
  }
  return result->body;
}

ObserverReport HttpLanguageModel::distill_dialog(const DialogBlock& block,
                                                 const SuggestionCatalog& catalog) {
  const auto prompt =
      render_prompt(prompts_.distill, question_, render_dialog(block), render_catalog(catalog));
  return parse_distill_response(extract_json_object(complete(prompt, render_dialog(block))), block,
                                catalog);
}

std::vector<PreferenceLabel> HttpLanguageModel::label_preferences(const DialogBlock& block,
                                                                  const SuggestionCatalog& catalog,
                                                                  const Roster& roster) {
  std::string roster_text;
  for (const auto& p : roster) roster_text += p.value() + "\n";
  const auto prompt =
      render_prompt(prompts_.label, question_, render_dialog(block), render_catalog(catalog));
  return parse_label_response(
      extract_json_object(complete(prompt, "Participants:\n" + roster_text)), block, catalog, roster);
}

std::optional<std::string> HttpLanguageModel::phrase_surrogate(const ObserverReport& report,
                                                               SurrogateMode mode,
                                                               std::string_view source_room_name) {
  if (report.entries.empty()) return std::nullopt;
  std::string distillate;
  for (const auto& e : report.entries) {
    distillate += to_string(e.kind) + ": " + e.item.text + " (conviction " +
                  std::to_string(e.conviction) + ")\n";
  }
  const auto prompt = render_prompt(prompts_.surrogate, question_, distillate, "");
  const std::string user = "mode: " + to_string(mode) + "\nsource room: " +
                           std::string(source_room_name) + "\n";
  return parse_surrogate_response(extract_json_object(complete(prompt, user)));
}

}  // namespace csi
