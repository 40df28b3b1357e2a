#include <doctest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include <httplib.h>

#include "csi/http_lm.hpp"
#include "csi/lm.hpp"
#include "csi/markers.hpp"
#include "marker_regex.hpp"
#include "support.hpp"

using namespace csi;
using testing_support::agent;
using testing_support::human;

namespace {

DialogBlock block_of(std::vector<Message> messages, std::uint32_t room = 0, std::uint64_t cycle = 0) {
  return DialogBlock{RoomId{room}, cycle, std::move(messages)};
}

struct ExpectedEntry {
  std::string item;
  StanceKind kind;
  int conviction;
  std::vector<std::uint64_t> evidence;
  TimeMs first_at;
};

// Single pass over the raw block with the regex scanner: one entry per
// (folded item, stance), strongest conviction kept, evidence in order.
std::vector<ExpectedEntry> reference_report(const DialogBlock& block) {
  std::vector<ExpectedEntry> out;
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (const auto& m : block.messages) {
    for (const auto& mark : oracle::scan_marks(m.body)) {
      const StanceKind kind = mark.kind == "PROPOSE"  ? StanceKind::proposed
                              : mark.kind == "OPPOSE" ? StanceKind::opposed
                                                      : StanceKind::supported;
      const auto key = std::make_pair(oracle::fold(mark.item), static_cast<int>(kind));
      auto it = index.find(key);
      if (it == index.end()) {
        index[key] = out.size();
        out.push_back({mark.item, kind, mark.signed_strength, {m.id.value()}, m.timestamp_ms});
        continue;
      }
      auto& e = out[it->second];
      if (std::abs(mark.signed_strength) > std::abs(e.conviction)) e.conviction = mark.signed_strength;
      if (e.evidence.back() != m.id.value()) e.evidence.push_back(m.id.value());
    }
  }
  return out;
}

SuggestionCatalog catalog_with(const std::vector<std::string>& items) {
  SuggestionCatalog catalog;
  std::vector<CatalogDelta> deltas;
  for (const auto& text : items) catalog.mention(ItemRef{std::nullopt, text}, 0, RoomId{0}, deltas);
  return catalog;
}

}  // namespace

TEST_CASE("mock distill: single proposal") {
  MockLanguageModel lm;
  const auto report = distill_or_degrade(lm, block_of({human(1, 0, "u1", "PROPOSE(nursing, 2)", 100)}), {});
  REQUIRE(report.entries.size() == 1);
  const auto& e = report.entries[0];
  CHECK(e.item.text == "nursing");
  CHECK_FALSE(e.item.id.has_value());
  CHECK(e.kind == StanceKind::proposed);
  CHECK(e.conviction == 2);
  CHECK(e.first_evidence_at_ms == 100);
}

TEST_CASE("mock distill: support and oppose from two authors") {
  MockLanguageModel lm;
  const auto report = distill_or_degrade(
      lm, block_of({human(1, 0, "u1", "SUPPORT(nursing, 3)", 0), human(2, 0, "u2", "OPPOSE(nursing, 2)", 5)}), {});
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].kind == StanceKind::supported);
  CHECK(report.entries[0].conviction == 3);
  CHECK(report.entries[1].kind == StanceKind::opposed);
  CHECK(report.entries[1].conviction == -2);
}

TEST_CASE("mock distill: relay counts as mild support") {
  MockLanguageModel lm;
  const auto report =
      distill_or_degrade(lm, block_of({agent(1, 0, AuthorKind::surrogate_agent, "RELAY(job loss)", 0)}), {});
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].kind == StanceKind::supported);
  CHECK(report.entries[0].conviction == 1);
}

TEST_CASE("mock distill: known aliases resolve to catalog ids") {
  MockLanguageModel lm;
  const auto catalog = catalog_with({"nursing"});
  const auto report = distill_or_degrade(lm, block_of({human(1, 0, "u1", "SUPPORT( Nursing , 2)", 0)}), catalog);
  REQUIRE(report.entries.size() == 1);
  REQUIRE(report.entries[0].item.id.has_value());
  CHECK(*report.entries[0].item.id == catalog.items()[0].id);
}

TEST_CASE("mock distill: matches the reference parser on mixed blocks") {
  std::mt19937 rng(5);
  const std::vector<std::string> items = {"nursing", "Nursing", "trucking", "job loss", "UBI "};
  const std::vector<std::string> kinds = {"PROPOSE", "SUPPORT", "OPPOSE", "RELAY"};
  MockLanguageModel lm;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Message> messages;
    for (std::uint64_t i = 1; i <= 12; ++i) {
      std::string body = "msg ";
      const int marks = static_cast<int>(rng() % 3);
      for (int k = 0; k < marks; ++k) {
        const auto& kind = kinds[rng() % kinds.size()];
        body += kind + "(" + items[rng() % items.size()];
        if (kind != "RELAY" && (kind != "PROPOSE" || rng() % 2)) body += ", " + std::to_string(1 + rng() % 3);
        body += ") ";
      }
      const auto who = "u" + std::to_string(rng() % 4);
      messages.push_back(rng() % 5 == 0 ? agent(i, 0, AuthorKind::surrogate_agent, body, 1000 * i)
                                        : human(i, 0, who, body, 1000 * static_cast<TimeMs>(i)));
    }
    const auto block = block_of(messages);
    const auto report = distill_or_degrade(lm, block, {});
    const auto expected = reference_report(block);
    REQUIRE(report.entries.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& got = report.entries[i];
      CHECK(normalize_item(got.item.text) == oracle::fold(expected[i].item));
      CHECK(got.kind == expected[i].kind);
      CHECK(got.conviction == expected[i].conviction);
      std::vector<std::uint64_t> evidence;
      for (auto id : got.evidence) evidence.push_back(id.value());
      CHECK(evidence == expected[i].evidence);
      CHECK(got.first_evidence_at_ms == 1000 * static_cast<TimeMs>(expected[i].evidence.front()));
    }
  }
}

TEST_CASE("mock labels: latest utterance wins inside a block") {
  MockLanguageModel lm;
  const Roster roster{ParticipantId{"u1"}, ParticipantId{"u2"}};
  const auto labels = labels_or_degrade(
      lm, block_of({human(1, 0, "u2", "OPPOSE(trucking, 1)", 0), human(2, 0, "u2", "SUPPORT(trucking, 2)", 10)}), {},
      roster);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].participant == ParticipantId{"u2"});
  CHECK(labels[0].strength == 2);
  CHECK(labels[0].at_ms == 10);
}

TEST_CASE("mock labels: agents and relays never label") {
  MockLanguageModel lm;
  const Roster roster{ParticipantId{"u1"}};
  CHECK(labels_or_degrade(lm,
                          block_of({agent(1, 0, AuthorKind::surrogate_agent, "SUPPORT(tea, 3) RELAY(tea)", 0),
                                    agent(2, 0, AuthorKind::observer_agent, "PROPOSE(tea, 3)", 0)}),
                          {}, roster)
            .empty());
  CHECK(labels_or_degrade(lm, block_of({human(1, 0, "u1", "RELAY(tea)", 0)}), {}, roster).empty());
}

TEST_CASE("mock labels: only roster members who spoke") {
  MockLanguageModel lm;
  const Roster roster{ParticipantId{"u1"}, ParticipantId{"u3"}};
  const auto labels = labels_or_degrade(
      lm, block_of({human(1, 0, "u1", "SUPPORT(nursing, 3)", 0), human(2, 0, "u2", "SUPPORT(nursing, 1)", 0)}), {},
      roster);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].participant == ParticipantId{"u1"});
  CHECK(labels[0].strength == 3);
}

TEST_CASE("mock surrogate: overt and natural phrasing") {
  MockLanguageModel lm;
  ObserverReport report;
  report.entries.push_back({ItemRef{std::nullopt, "job loss"}, StanceKind::supported, 2, {}, 0});
  const auto overt = phrase_or_fallback(lm, report, SurrogateMode::overt, "ThinkTank 3");
  REQUIRE(overt.has_value());
  CHECK(overt->rfind("I've been observing ThinkTank 3", 0) == 0);
  CHECK(overt->find("RELAY(job loss)") != std::string::npos);

  const auto natural = phrase_or_fallback(lm, report, SurrogateMode::natural, "ThinkTank 3");
  REQUIRE(natural.has_value());
  CHECK(natural->find("RELAY(job loss)") != std::string::npos);
  CHECK(natural->find("ThinkTank") == std::string::npos);
  CHECK(natural->find("I ") != std::string::npos);

  CHECK_FALSE(phrase_or_fallback(lm, ObserverReport{}, SurrogateMode::overt, "x").has_value());
}

TEST_CASE("mock surrogate: relays every entry") {
  ObserverReport report;
  for (const char* item : {"a", "b b", "C"}) {
    report.entries.push_back({ItemRef{std::nullopt, item}, StanceKind::opposed, -1, {}, 0});
  }
  const auto text = template_surrogate_text(report, SurrogateMode::overt, "ThinkTank 1");
  REQUIRE(text.has_value());
  const auto marks = parse_markers(*text);
  REQUIRE(marks.size() == 3);
  for (const auto& m : marks) CHECK(m.kind == MarkerKind::relay);
}

TEST_CASE("mock is a pure function") {
  MockLanguageModel a, b;
  const auto block = block_of({human(1, 0, "u1", "PROPOSE(x, 3) OPPOSE(y, 1)", 0)});
  CHECK(a.distill_dialog(block, {}) == b.distill_dialog(block, {}));
  CHECK(a.distill_dialog(block, {}) == a.distill_dialog(block, {}));
}

TEST_CASE("degrade: empty blocks skip the backend") {
  testing_support::CannedModel lm;
  CHECK(distill_or_degrade(lm, block_of({}), {}).entries.empty());
  CHECK(labels_or_degrade(lm, block_of({}), {}, {}).empty());
  CHECK(lm.calls == 0);
}

TEST_CASE("degrade: backend failure gives a degraded empty report") {
  testing_support::BrokenModel lm;
  const auto report = distill_or_degrade(lm, block_of({human(1, 0, "u1", "PROPOSE(x)", 0)}, 2, 7), {});
  CHECK(report.degraded);
  CHECK(report.entries.empty());
  CHECK(report.room == RoomId{2});
  CHECK(report.cycle_index == 7u);
  CHECK(labels_or_degrade(lm, block_of({human(1, 0, "u1", "PROPOSE(x)", 0)}), {}, {ParticipantId{"u1"}}).empty());

  ObserverReport r;
  r.entries.push_back({ItemRef{std::nullopt, "tea"}, StanceKind::supported, 1, {}, 0});
  const auto text = phrase_or_fallback(lm, r, SurrogateMode::overt, "ThinkTank 2");
  REQUIRE(text.has_value());
  CHECK(text->find("RELAY(tea)") != std::string::npos);
}

TEST_CASE("degrade: invalid entries and labels are dropped") {
  testing_support::CannedModel lm;
  lm.report.entries = {{ItemRef{std::nullopt, "good"}, StanceKind::supported, 2, {MessageId{1}, MessageId{99}}, 0},
                       {ItemRef{std::nullopt, "bad sign"}, StanceKind::opposed, 2, {}, 0},
                       {ItemRef{std::nullopt, "too big"}, StanceKind::proposed, 4, {}, 0},
                       {ItemRef{std::nullopt, "zero"}, StanceKind::supported, 0, {}, 0},
                       {ItemRef{std::nullopt, "  "}, StanceKind::supported, 1, {}, 0},
                       {ItemRef{ItemId{"item-404"}, "ghost"}, StanceKind::supported, 1, {}, 0}};
  const auto block = block_of({human(1, 0, "u1", "hi", 400), human(2, 0, "u1", "there", 900)});
  const auto report = distill_or_degrade(lm, block, {});
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].item.text == "good");
  CHECK(report.entries[0].evidence == std::vector<MessageId>{MessageId{1}});
  CHECK(report.entries[0].first_evidence_at_ms == 400);
  CHECK_FALSE(report.entries[1].item.id.has_value());
  CHECK(report.entries[1].first_evidence_at_ms == 400);

  lm.labels = {{ParticipantId{"u1"}, ItemRef{std::nullopt, "good"}, 3, 0},
               {ParticipantId{"u1"}, ItemRef{std::nullopt, "good"}, -4, 0},
               {ParticipantId{"observer"}, ItemRef{std::nullopt, "good"}, 1, 0}};
  const auto labels = labels_or_degrade(lm, block, {}, {ParticipantId{"u1"}});
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].strength == 3);
}

TEST_CASE("degrade: duplicate item and kind are merged") {
  testing_support::CannedModel lm;
  lm.report.entries = {{ItemRef{std::nullopt, "Tea"}, StanceKind::supported, 1, {MessageId{1}}, 0},
                       {ItemRef{std::nullopt, "tea "}, StanceKind::supported, 3, {MessageId{2}}, 0},
                       {ItemRef{std::nullopt, "tea"}, StanceKind::opposed, -1, {MessageId{2}}, 0}};
  const auto report =
      distill_or_degrade(lm, block_of({human(1, 0, "u1", "a", 10), human(2, 0, "u2", "b", 20)}), {});
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].conviction == 3);
  CHECK(report.entries[0].evidence.size() == 2);
}

TEST_CASE("http: extracting the JSON object") {
  CHECK(extract_json_object(R"({"entries": []})") == Json{{"entries", Json::array()}});
  const Json envelope = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Sure!\n```json\n{\"text\": \"hi\"}\n```\n"}}}}}}};
  CHECK(extract_json_object(envelope.dump()) == Json{{"text", "hi"}});
  const Json loose = {{"choices", {{{"message", {{"content", "Here it is: {\"text\": \"x {y}\"} done"}}}}}}};
  CHECK(extract_json_object(loose.dump()) == Json{{"text", "x {y}"}});
  CHECK_THROWS_AS(extract_json_object("no json here"), BackendError);
  CHECK_THROWS_AS(extract_json_object(R"({"choices": []})"), BackendError);
}

TEST_CASE("http: distill schema validation") {
  const auto catalog = catalog_with({"nursing"});
  const auto block = block_of({human(5, 1, "u1", "x", 0)}, 1, 3);
  const Json json = Json::parse(R"({"summary": "s", "entries": [
      {"item": "Nursing", "kind": "supported", "conviction": 2, "evidence": [5]},
      {"item": "robots", "kind": "opposed", "conviction": -3},
      {"item": "bad", "kind": "opposed", "conviction": 3},
      {"item": "frac", "kind": "supported", "conviction": 1.5},
      {"item": "huge", "kind": "supported", "conviction": 9},
      {"kind": "supported", "conviction": 1},
      {"item": "weird", "kind": "maybe", "conviction": 1}]})");
  const auto report = parse_distill_response(json, block, catalog);
  CHECK(report.summary_text == "s");
  CHECK(report.room == RoomId{1});
  CHECK(report.cycle_index == 3u);
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].item.id == catalog.items()[0].id);
  CHECK(report.entries[1].conviction == -3);
  CHECK_THROWS_AS(parse_distill_response(Json{{"summary", "x"}}, block, catalog), BackendError);
}

TEST_CASE("http: label schema validation") {
  const auto block = block_of({human(1, 0, "u1", "x", 100), human(2, 0, "u1", "y", 300), human(3, 0, "u2", "z", 50)});
  const Roster roster{ParticipantId{"u1"}, ParticipantId{"u2"}, ParticipantId{"u3"}};
  const Json json = Json::parse(R"({"labels": [
      {"participant": "u1", "item": "tea", "strength": -2},
      {"participant": "u2", "item": "tea", "strength": 4},
      {"participant": "u3", "item": "tea", "strength": 1},
      {"participant": "observer-agent", "item": "tea", "strength": 1},
      {"participant": "u2", "item": "tea", "strength": 0}]})");
  const auto labels = parse_label_response(json, block, {}, roster);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].strength == -2);
  CHECK(labels[0].at_ms == 300);
  CHECK(labels[1].participant == ParticipantId{"u2"});
  CHECK(labels[1].at_ms == 50);
  CHECK_THROWS_AS(parse_label_response(Json::object(), block, {}, roster), BackendError);
}

TEST_CASE("http: surrogate schema") {
  CHECK(parse_surrogate_response(Json{{"text", "hello"}}) == "hello");
  CHECK_THROWS_AS(parse_surrogate_response(Json{{"text", 3}}), BackendError);
}

TEST_CASE("http: prompts render with every placeholder filled") {
  const auto prompts = PromptTemplates::load(CSI_SOURCE_DIR "/prompts");
  for (const auto* tmpl : {&prompts.distill, &prompts.label, &prompts.surrogate}) {
    const auto text = render_prompt(*tmpl, "Q?", "[1] u1: hi\n", "item-1: tea\n");
    CHECK(text.find("{{") == std::string::npos);
    CHECK(text.find("Q?") != std::string::npos);
  }
  CHECK(render_dialog(block_of({human(7, 0, "u1", "hi", 0), agent(8, 0, AuthorKind::surrogate_agent, "yo", 0)})) ==
        "[7] u1: hi\n[8] surrogate-agent: yo\n");
  CHECK(render_catalog({}) == "(no suggestions yet)\n");
  CHECK(render_catalog(catalog_with({"Tea"})) == "item-1: tea\n");
  CHECK_THROWS_AS(PromptTemplates::load("/nonexistent"), Error);
}

namespace {

struct FakeEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  Json last_request;
  std::string last_auth;
  std::string reply;
  int delay_ms = 0;
  std::mutex mutex;

  FakeEndpoint() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      {
        std::lock_guard lock(mutex);
        last_request = Json::parse(req.body);
        last_auth = req.get_header_value("Authorization");
      }
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      const Json envelope = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}};
      res.set_content(envelope.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }

  HttpLanguageModel model(std::chrono::milliseconds timeout = std::chrono::milliseconds(5000)) {
    HttpBackendOptions options;
    options.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    options.api_key = "sekrit";
    options.model = "test-model";
    options.timeout = timeout;
    return HttpLanguageModel(options, PromptTemplates::load(CSI_SOURCE_DIR "/prompts"), "Best snack?");
  }
};

}  // namespace

TEST_CASE("http: round trip against a local endpoint") {
  FakeEndpoint endpoint;
  auto lm = endpoint.model();
  endpoint.reply = "```json\n{\"entries\": [{\"item\": \"tea\", \"kind\": \"proposed\", \"conviction\": 2, \"evidence\": [1]}]}\n```";
  const auto block = block_of({human(1, 0, "u1", "how about tea", 10)});
  const auto report = distill_or_degrade(lm, block, {});
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].item.text == "tea");
  CHECK(report.entries[0].first_evidence_at_ms == 10);
  {
    std::lock_guard lock(endpoint.mutex);
    CHECK(endpoint.last_auth == "Bearer sekrit");
    CHECK(endpoint.last_request["model"] == "test-model");
    CHECK(endpoint.last_request["temperature"] == 0.0);
    REQUIRE(endpoint.last_request["messages"].size() == 2);
    CHECK(endpoint.last_request["messages"][0]["role"] == "system");
    CHECK(endpoint.last_request["messages"][0]["content"].get<std::string>().find("Best snack?") != std::string::npos);
  }

  endpoint.reply = R"({"labels": [{"participant": "u1", "item": "tea", "strength": 3}]})";
  const auto labels = labels_or_degrade(lm, block, {}, {ParticipantId{"u1"}});
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].strength == 3);

  endpoint.reply = R"({"text": "Over in ThinkTank 2 people like RELAY(tea)."})";
  ObserverReport r;
  r.entries.push_back({ItemRef{std::nullopt, "tea"}, StanceKind::supported, 1, {}, 0});
  CHECK(phrase_or_fallback(lm, r, SurrogateMode::overt, "ThinkTank 2") ==
        std::optional<std::string>("Over in ThinkTank 2 people like RELAY(tea)."));
  CHECK(endpoint.hits == 3);
}

TEST_CASE("http: garbage and timeouts degrade") {
  FakeEndpoint endpoint;
  auto lm = endpoint.model(std::chrono::milliseconds(300));
  const auto block = block_of({human(1, 0, "u1", "x", 0)});
  endpoint.reply = "I cannot help with that.";
  CHECK(distill_or_degrade(lm, block, {}).degraded);

  endpoint.delay_ms = 1500;
  endpoint.reply = R"({"entries": []})";
  CHECK(distill_or_degrade(lm, block, {}).degraded);
}

TEST_CASE("http: bad endpoint rejected") {
  HttpBackendOptions options;
  options.endpoint = "localhost:8000";
  CHECK_THROWS_AS(HttpLanguageModel(options, PromptTemplates{}, "q"), Error);
}
