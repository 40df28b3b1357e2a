// csi: deliberation server, replay/finalize tools, analytics and simulation.

#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "csi/analytics.hpp"
#include "csi/error.hpp"
#include "csi/http_lm.hpp"
#include "csi/log.hpp"
#include "csi/server.hpp"
#include "csi/session.hpp"
#include "csi/sim.hpp"

namespace fs = std::filesystem;
using namespace csi;

namespace {

SessionHub::BackendFactory backend_factory(const std::string& kind) {
  if (kind == "mock") {
    auto mock = std::make_shared<MockLanguageModel>();
    return [mock](const SessionConfig&) -> std::shared_ptr<LanguageModel> { return mock; };
  }
  auto options = HttpBackendOptions::from_environment();
  if (!options) throw Error("--backend http needs LM_ENDPOINT to be set");
  auto prompts = PromptTemplates::load(options->prompt_dir);
  return [options = *options, prompts](const SessionConfig& config) -> std::shared_ptr<LanguageModel> {
    return std::make_shared<HttpLanguageModel>(options, prompts, config.question);
  };
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

Json summary(const Session& s) {
  return Json{{"session_id", s.id()},
              {"phase", to_string(s.phase())},
              {"events", s.events().size()},
              {"participants", s.roster().size()},
              {"rooms", s.phase() == Phase::lobby ? 0 : s.plan().room_count()},
              {"messages", s.transcript().all().size()},
              {"now_ms", s.now_ms()},
              {"result", s.result_json()}};
}

int run_sims(const std::vector<std::string>& files, std::optional<std::uint64_t> seed, const fs::path& out,
             std::size_t jobs) {
  struct Outcome {
    std::string line;
    bool ok = false;
  };
  std::vector<Outcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        const auto scenario = sim::load_scenario(files[i]);
        const std::uint64_t run_seed = seed ? *seed : scenario.config.value("rng_seed", std::uint64_t{0});
        const auto run = sim::run_scenario(scenario, run_seed);
        const fs::path dir = files.size() == 1 ? out : out / scenario.name;
        sim::write_run(run, dir);
        std::string line = scenario.name + ": winner '" + run.result.winner_label + "', " +
                           std::to_string(run.events.size()) + " events -> " + dir.string();
        for (const auto& f : run.expectation_failures) line += "\n  expectation failed: " + f;
        outcomes[i] = {line, run.expectation_failures.empty()};
      } catch (const ConfigError& e) {
        std::string line = files[i] + ": invalid scenario";
        for (const auto& f : e.errors()) line += "\n  " + f.field + ": " + f.reason;
        outcomes[i] = {line, false};
      } catch (const std::exception& e) {
        outcomes[i] = {files[i] + ": " + e.what(), false};
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, jobs); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  bool ok = true;
  for (const auto& o : outcomes) {
    (o.ok ? std::cout : std::cerr) << o.line << '\n';
    ok = ok && o.ok;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational swarm deliberation server and tools"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket server");
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  std::string state_dir = "state";
  std::string token;
  std::string backend = "mock";
  std::size_t threads = 2;
  serve->add_option("--address", address, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port (0 = any free port)")->capture_default_str();
  serve->add_option("--state-dir", state_dir, "Event logs and survey files")->capture_default_str();
  serve->add_option("--token", token, "Static join token required from clients");
  serve->add_option("--backend", backend, "Language model backend")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  serve->add_option("--threads", threads, "I/O threads")->capture_default_str();

  // replay
  auto* replay = app.add_subcommand("replay", "Rebuild a session from its event log");
  std::string events_file;
  std::string state_out;
  replay->add_option("events-file", events_file)->required()->check(CLI::ExistingFile);
  replay->add_option("--state-out", state_out, "Write the full reconstructed state as JSON");

  // finalize
  auto* finalize = app.add_subcommand("finalize", "Finalize a stored session and append the result");
  std::string session_ref;
  std::string finalize_backend = "mock";
  finalize->add_option("session", session_ref, "Session id or path to its event log")->required();
  finalize->add_option("--state-dir", state_dir, "Where <session>.events.jsonl lives")->capture_default_str();
  finalize->add_option("--backend", finalize_backend)->check(CLI::IsMember({"mock", "http"}))->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Compare a standard-chat and a swarm session");
  std::string chat_file, swarm_file, survey_file, analyze_out;
  analyze->add_option("--chat", chat_file, "Standard-chat event log")->required()->check(CLI::ExistingFile);
  analyze->add_option("--swarm", swarm_file, "Swarm event log")->required()->check(CLI::ExistingFile);
  analyze->add_option("--survey", survey_file, "Survey CSV (participant,question,answer)")
      ->check(CLI::ExistingFile);
  analyze->add_option("--out", analyze_out, "Output directory")->required();

  // sim
  auto* sim_cmd = app.add_subcommand("sim", "Scripted simulations");
  sim_cmd->require_subcommand(1);
  auto* sim_run = sim_cmd->add_subcommand("run", "Run scenario files");
  std::vector<std::string> scenario_files;
  std::optional<std::uint64_t> sim_seed;
  std::string sim_out = "sim-out";
  std::size_t jobs = 1;
  sim_run->add_option("scenario", scenario_files, "Scenario JSON files")->required()->check(CLI::ExistingFile);
  sim_run->add_option("--seed", sim_seed, "Override the scenario seed");
  sim_run->add_option("--out", sim_out, "Output directory (one subdirectory per scenario when several)")
      ->capture_default_str();
  sim_run->add_option("--jobs", jobs, "Scenarios run in parallel")->capture_default_str();

  auto* sim_probe = sim_cmd->add_subcommand("probe", "Ring propagation probe");
  std::size_t rooms = 8;
  std::uint64_t probe_seed = 0;
  std::string probe_out;
  sim_probe->add_option("--rooms", rooms, "Number of rooms (>= 2)")->capture_default_str();
  sim_probe->add_option("--seed", probe_seed)->capture_default_str();
  sim_probe->add_option("--out", probe_out, "Also write the latency table as CSV");

  CLI11_PARSE(app, argc, argv);

  log::set_level(log::parse_level(log_level));

  try {
    if (*serve) {
      HubOptions options;
      options.state_dir = state_dir;
      if (!token.empty()) options.token = token;
      SessionHub hub(options, backend_factory(backend));
      const auto loaded = hub.load_state();
      if (!loaded.empty()) log::info("restored " + std::to_string(loaded.size()) + " sessions");
      Server server(hub, ServerOptions{address, port, threads, std::chrono::milliseconds(200)});
      server.start();
      std::cout << "listening on " << address << ':' << server.port() << std::endl;
      server.run();
      return 0;
    }

    if (*replay) {
      const Session s = Session::replay(read_event_log(events_file));
      if (!state_out.empty()) write_file(state_out, s.state_json().dump(2) + "\n");
      std::cout << summary(s).dump(2) << '\n';
      return 0;
    }

    if (*finalize) {
      fs::path path = session_ref;
      if (!fs::exists(path)) path = fs::path(state_dir) / (session_ref + ".events.jsonl");
      Session s = Session::replay(read_event_log(path));
      const std::size_t before = s.events().size();
      s.set_backend(backend_factory(finalize_backend)(s.config()));
      s.finalize(s.end_ms());
      std::ofstream out(path, std::ios::binary | std::ios::app);
      for (std::size_t i = before; i < s.events().size(); ++i) out << to_jsonl_line(s.events()[i]);
      std::cout << s.result_json().dump(2) << '\n';
      return 0;
    }

    if (*analyze) {
      std::optional<std::vector<analytics::SurveyResponse>> survey;
      if (!survey_file.empty()) survey = analytics::parse_survey_csv(read_file(survey_file));
      const auto report =
          analytics::build_report(read_event_log(chat_file), read_event_log(swarm_file), std::move(survey));
      analytics::write_report(report, analyze_out);
      std::cout << analytics::render_markdown(report);
      return 0;
    }

    if (*sim_run) return run_sims(scenario_files, sim_seed, sim_out, jobs);

    if (*sim_probe) {
      const auto probe = sim::propagation_probe(rooms, probe_seed);
      const std::string csv = sim::probe_csv(probe);
      if (!probe_out.empty()) write_file(probe_out, csv);
      std::cout << csv;
      std::cout << "all within bound: " << (probe.all_within_bound ? "yes" : "no")
                << ", monotone: " << (probe.monotone ? "yes" : "no") << '\n';
      return probe.all_within_bound && probe.monotone ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& f : e.errors()) std::cerr << "  " << f.field << ": " << f.reason << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
