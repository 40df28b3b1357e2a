#include "csi/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csi/error.hpp"

namespace csi::analytics {

namespace {

std::string fmt(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string fmt_optional(const std::optional<double>& value, int digits) {
  return value ? fmt(*value, digits) : "undefined";
}

std::string fmt_p(double p) {
  char buf[64];
  if (p != 0.0 && p < 1e-4) {
    std::snprintf(buf, sizeof buf, "%.3e", p);
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", p);
  }
  return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<double> column(const std::vector<UserContribution>& users, bool characters) {
  std::vector<double> out;
  out.reserve(users.size());
  for (const auto& u : users) out.push_back(characters ? u.characters_per_minute : u.messages_per_minute);
  return out;
}

constexpr std::pair<SurveyAnswer, const char*> kAnswers[] = {
    {SurveyAnswer::chat_by_a_lot, "chat_by_a_lot"},
    {SurveyAnswer::chat_by_a_little, "chat_by_a_little"},
    {SurveyAnswer::no_preference, "no_preference"},
    {SurveyAnswer::swarm_by_a_little, "swarm_by_a_little"},
    {SurveyAnswer::swarm_by_a_lot, "swarm_by_a_lot"},
};

}  // namespace

std::size_t unicode_scalar_count(std::string_view utf8) {
  std::size_t count = 0;
  for (unsigned char c : utf8) {
    if ((c & 0xC0) != 0x80) ++count;
  }
  return count;
}

std::vector<UserContribution> compute_contributions(std::span<const Message> messages,
                                                    std::span<const ParticipantId> roster,
                                                    double window_s) {
  if (roster.empty()) throw Error("contribution statistics need a non-empty roster");
  if (!(window_s > 0.0)) throw Error("contribution window must be positive");
  std::map<ParticipantId, UserContribution> by_user;
  for (const auto& p : roster) by_user[p].participant = p;

  const double window_ms = window_s * 1000.0;
  for (const auto& m : messages) {
    if (!m.author.is_human() || static_cast<double>(m.timestamp_ms) > window_ms) continue;
    auto it = by_user.find(m.author.participant);
    if (it == by_user.end()) continue;
    it->second.messages += 1;
    it->second.characters += static_cast<std::int64_t>(unicode_scalar_count(m.body));
  }

  const double minutes = window_s / 60.0;
  std::vector<UserContribution> out;
  for (const auto& p : roster) {
    auto u = by_user.at(p);
    u.messages_per_minute = static_cast<double>(u.messages) / minutes;
    u.characters_per_minute = static_cast<double>(u.characters) / minutes;
    out.push_back(std::move(u));
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("percentile fraction must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::optional<double> contribution_ratio_from_percentiles(double p10, double p90) {
  if (p10 == 0.0) return std::nullopt;
  return p90 / p10;
}

std::optional<double> contribution_ratio(std::span<const double> values) {
  return contribution_ratio_from_percentiles(percentile(values, 0.1), percentile(values, 0.9));
}

double relative_change(double from, double to) { return to / from - 1.0; }

Distribution describe(std::span<const double> values) {
  Distribution d;
  d.n = values.size();
  if (values.empty()) return d;
  d.mean = mean(values);
  d.variance = sample_variance(values);
  d.p10 = percentile(values, 0.10);
  d.p25 = percentile(values, 0.25);
  d.p50 = percentile(values, 0.50);
  d.p75 = percentile(values, 0.75);
  d.p90 = percentile(values, 0.90);
  d.contribution_ratio = contribution_ratio_from_percentiles(d.p10, d.p90);
  return d;
}

ContributionStats contribution_stats(std::span<const Event> transcript, std::optional<double> window_s) {
  std::vector<ParticipantId> roster;
  std::vector<Message> messages;
  double configured_window = 0.0;
  for (const auto& e : transcript) {
    switch (e.kind) {
      case EventKind::session_created:
        configured_window = static_cast<double>(e.payload.at("config").at("duration_s").get<std::int64_t>());
        break;
      case EventKind::participant_joined:
        roster.emplace_back(e.payload.at("participant").get<std::string>());
        break;
      case EventKind::message:
        messages.push_back(message_from_json(e.payload));
        break;
      default:
        break;
    }
  }
  ContributionStats stats;
  stats.window_s = window_s.value_or(configured_window);
  stats.users = compute_contributions(messages, roster, stats.window_s);
  const auto mpm = column(stats.users, false);
  const auto cpm = column(stats.users, true);
  stats.messages_per_minute = describe(mpm);
  stats.characters_per_minute = describe(cpm);
  return stats;
}

std::string to_string(SurveyAnswer answer) {
  for (const auto& [a, name] : kAnswers) {
    if (a == answer) return name;
  }
  return "?";
}

SurveyAnswer parse_survey_answer(const std::string& text) {
  for (const auto& [a, name] : kAnswers) {
    if (text == name) return a;
  }
  throw Error("unknown survey answer: '" + text + "'");
}

bool favors_swarm(SurveyAnswer answer) {
  return answer == SurveyAnswer::swarm_by_a_little || answer == SurveyAnswer::swarm_by_a_lot;
}

std::vector<SurveyResponse> parse_survey_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error("survey file is empty");
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"participant", "question", "answer"}) {
    throw Error("survey header must be participant,question,answer");
  }
  std::vector<SurveyResponse> responses;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) throw Error("survey line " + std::to_string(line_no) + ": expected 3 fields");
    SurveyResponse r{ParticipantId{fields[0]}, fields[1], parse_survey_answer(fields[2])};
    auto [it, inserted] = index.try_emplace({fields[0], fields[1]}, responses.size());
    if (inserted) {
      responses.push_back(std::move(r));
    } else {
      responses[it->second] = std::move(r);
    }
  }
  return responses;
}

std::string write_survey_csv(std::span<const SurveyResponse> responses) {
  std::string out = "participant,question,answer\n";
  for (const auto& r : responses) {
    out += csv_field(r.participant.value()) + "," + csv_field(r.question) + "," + to_string(r.answer) + "\n";
  }
  return out;
}

std::vector<SurveyQuestionSummary> summarize_survey(std::span<const SurveyResponse> responses) {
  std::vector<SurveyQuestionSummary> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : responses) {
    auto [it, inserted] = index.try_emplace(r.question, out.size());
    if (inserted) out.push_back(SurveyQuestionSummary{r.question, {}, 0, 0, 1.0});
    auto& q = out[it->second];
    q.counts[r.answer] += 1;
    q.respondents += 1;
    if (favors_swarm(r.answer)) q.in_favor += 1;
  }
  for (auto& q : out) q.p_value = stats::binomial_test(q.in_favor, q.respondents, 0.5);
  return out;
}

Report build_report(std::span<const Event> chat, std::span<const Event> swarm,
                    std::optional<std::vector<SurveyResponse>> survey) {
  Report report;
  report.chat = contribution_stats(chat);
  report.swarm = contribution_stats(swarm);

  std::map<ParticipantId, const UserContribution*> in_chat;
  for (const auto& u : report.chat.users) in_chat[u.participant] = &u;
  std::vector<double> chat_m, swarm_m, chat_c, swarm_c;
  for (const auto& u : report.swarm.users) {
    auto it = in_chat.find(u.participant);
    if (it == in_chat.end()) continue;
    chat_m.push_back(it->second->messages_per_minute);
    swarm_m.push_back(u.messages_per_minute);
    chat_c.push_back(it->second->characters_per_minute);
    swarm_c.push_back(u.characters_per_minute);
  }
  report.paired.pairs = chat_m.size();
  if (chat_m.size() >= 2) {
    report.paired.messages = stats::paired_t_test(chat_m, swarm_m);
    report.paired.characters = stats::paired_t_test(chat_c, swarm_c);
  }
  if (survey) report.survey = summarize_survey(*survey);
  return report;
}

std::string format_percent_change(double fraction) {
  const long rounded = std::lround(fraction * 100.0);
  return (rounded >= 0 ? "+" : "") + std::to_string(rounded) + "%";
}

std::string render_markdown(const Report& r) {
  std::ostringstream md;
  const auto& cm = r.chat.messages_per_minute;
  const auto& sm = r.swarm.messages_per_minute;
  const auto& cc = r.chat.characters_per_minute;
  const auto& sc = r.swarm.characters_per_minute;

  md << "# Deliberation contribution report\n\n";
  md << "Participants: chat " << r.chat.users.size() << ", swarm " << r.swarm.users.size()
     << ", paired " << r.paired.pairs << ". Windows: chat " << r.chat.window_s << " s, swarm "
     << r.swarm.window_s << " s. Variance is the sample variance.\n\n";

  md << "## User contribution\n\n";
  md << "| Measurement | Metric | Single chat room | Conversational swarm | Change |\n";
  md << "|---|---|---|---|---|\n";
  md << "| Messages per minute | Mean | " << fmt(cm.mean, 3) << " | " << fmt(sm.mean, 3) << " | "
     << format_percent_change(relative_change(cm.mean, sm.mean)) << " |\n";
  md << "| | Variance | " << fmt(cm.variance, 3) << " | " << fmt(sm.variance, 3) << " | |\n";
  md << "| Characters per minute | Mean | " << fmt(cc.mean, 1) << " | " << fmt(sc.mean, 1) << " | "
     << format_percent_change(relative_change(cc.mean, sc.mean)) << " |\n";
  md << "| | Variance | " << fmt(cc.variance, 1) << " | " << fmt(sc.variance, 1) << " | |\n\n";

  auto ratio_change = [](const Distribution& chat, const Distribution& swarm) -> std::string {
    if (!chat.contribution_ratio || !swarm.contribution_ratio) return "undefined";
    return format_percent_change(relative_change(*swarm.contribution_ratio, *chat.contribution_ratio));
  };
  md << "## Contribution ratio (90th / 10th percentile)\n\n";
  md << "| Measurement | Metric | Chat room | Conversational swarm |\n|---|---|---|---|\n";
  md << "| Messages per minute | 10th percentile | " << fmt(cm.p10, 3) << " | " << fmt(sm.p10, 3) << " |\n";
  md << "| | 90th percentile | " << fmt(cm.p90, 3) << " | " << fmt(sm.p90, 3) << " |\n";
  md << "| | Contribution ratio | " << fmt_optional(cm.contribution_ratio, 2) << " | "
     << fmt_optional(sm.contribution_ratio, 2) << " |\n";
  md << "| Characters per minute | 10th percentile | " << fmt(cc.p10, 1) << " | " << fmt(sc.p10, 1) << " |\n";
  md << "| | 90th percentile | " << fmt(cc.p90, 1) << " | " << fmt(sc.p90, 1) << " |\n";
  md << "| | Contribution ratio | " << fmt_optional(cc.contribution_ratio, 2) << " | "
     << fmt_optional(sc.contribution_ratio, 2) << " |\n\n";
  md << "Chat-room contribution ratio relative to swarm: messages " << ratio_change(cm, sm)
     << ", characters " << ratio_change(cc, sc) << ".\n\n";

  md << "## Paired t-tests (swarm - chat)\n\n";
  if (r.paired.messages && r.paired.characters) {
    md << "| Measurement | Pairs | Mean difference | t | df | p (two-sided) |\n|---|---|---|---|---|---|\n";
    auto row = [&](const char* name, const stats::TTestResult& t) {
      md << "| " << name << " | " << r.paired.pairs << " | " << fmt(t.mean_difference, 4) << " | "
         << (t.degenerate ? "degenerate" : fmt(t.t, 3)) << " | " << t.df << " | " << fmt_p(t.p) << " |\n";
    };
    row("Messages per minute", *r.paired.messages);
    row("Characters per minute", *r.paired.characters);
    md << "\n";
  } else {
    md << "Fewer than two participants appear in both transcripts; no paired test.\n\n";
  }

  if (r.survey) {
    md << "## Survey (in favor of swarm vs all other answers, one-sided binomial, p0 = 0.5)\n\n";
    md << "| Question | Respondents | In favor | No preference | Opposed | p |\n|---|---|---|---|---|---|\n";
    for (const auto& q : *r.survey) {
      const auto count = [&](SurveyAnswer a) {
        auto it = q.counts.find(a);
        return it == q.counts.end() ? std::size_t{0} : it->second;
      };
      const std::size_t opposed = count(SurveyAnswer::chat_by_a_lot) + count(SurveyAnswer::chat_by_a_little);
      md << "| " << q.question << " | " << q.respondents << " | " << q.in_favor << " | "
         << count(SurveyAnswer::no_preference) << " | " << opposed << " | " << fmt_p(q.p_value) << " |\n";
    }
    md << "\n";
  }
  return md.str();
}

void write_report(const Report& r, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "tables");
  auto open = [&](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    return out;
  };

  open(out_dir / "report.md") << render_markdown(r);

  {
    auto out = open(out_dir / "tables" / "conditions.csv");
    out << "measurement,metric,chat,swarm,relative_change\n";
    const auto& cm = r.chat.messages_per_minute;
    const auto& sm = r.swarm.messages_per_minute;
    const auto& cc = r.chat.characters_per_minute;
    const auto& sc = r.swarm.characters_per_minute;
    out << "messages_per_minute,mean," << fmt(cm.mean, 6) << "," << fmt(sm.mean, 6) << ","
        << fmt(relative_change(cm.mean, sm.mean), 6) << "\n";
    out << "messages_per_minute,variance," << fmt(cm.variance, 6) << "," << fmt(sm.variance, 6) << ",\n";
    out << "characters_per_minute,mean," << fmt(cc.mean, 6) << "," << fmt(sc.mean, 6) << ","
        << fmt(relative_change(cc.mean, sc.mean), 6) << "\n";
    out << "characters_per_minute,variance," << fmt(cc.variance, 6) << "," << fmt(sc.variance, 6) << ",\n";
  }
  {
    auto out = open(out_dir / "tables" / "percentiles.csv");
    out << "measurement,statistic,chat,swarm\n";
    auto rows = [&](const char* name, const Distribution& c, const Distribution& s) {
      out << name << ",p10," << fmt(c.p10, 6) << "," << fmt(s.p10, 6) << "\n";
      out << name << ",p25," << fmt(c.p25, 6) << "," << fmt(s.p25, 6) << "\n";
      out << name << ",p50," << fmt(c.p50, 6) << "," << fmt(s.p50, 6) << "\n";
      out << name << ",p75," << fmt(c.p75, 6) << "," << fmt(s.p75, 6) << "\n";
      out << name << ",p90," << fmt(c.p90, 6) << "," << fmt(s.p90, 6) << "\n";
      out << name << ",contribution_ratio," << fmt_optional(c.contribution_ratio, 6) << ","
          << fmt_optional(s.contribution_ratio, 6) << "\n";
    };
    rows("messages_per_minute", r.chat.messages_per_minute, r.swarm.messages_per_minute);
    rows("characters_per_minute", r.chat.characters_per_minute, r.swarm.characters_per_minute);
  }
  {
    auto out = open(out_dir / "tables" / "per_user.csv");
    out << "condition,participant,messages,characters,messages_per_minute,characters_per_minute\n";
    auto rows = [&](const char* condition, const ContributionStats& s) {
      for (const auto& u : s.users) {
        out << condition << "," << csv_field(u.participant.value()) << "," << u.messages << ","
            << u.characters << "," << fmt(u.messages_per_minute, 6) << ","
            << fmt(u.characters_per_minute, 6) << "\n";
      }
    };
    rows("chat", r.chat);
    rows("swarm", r.swarm);
  }
  {
    auto out = open(out_dir / "tables" / "tests.csv");
    out << "measurement,pairs,mean_difference,t,df,p,degenerate\n";
    auto row = [&](const char* name, const std::optional<stats::TTestResult>& t) {
      if (!t) return;
      out << name << "," << r.paired.pairs << "," << fmt(t->mean_difference, 6) << "," << t->t << ","
          << t->df << "," << t->p << "," << (t->degenerate ? "true" : "false") << "\n";
    };
    row("messages_per_minute", r.paired.messages);
    row("characters_per_minute", r.paired.characters);
  }
  if (r.survey) {
    auto out = open(out_dir / "tables" / "survey.csv");
    out << "question";
    for (const auto& [a, name] : kAnswers) out << "," << name;
    out << ",respondents,in_favor,fraction_in_favor,p_value\n";
    for (const auto& q : *r.survey) {
      out << csv_field(q.question);
      for (const auto& [a, name] : kAnswers) {
        auto it = q.counts.find(a);
        out << "," << (it == q.counts.end() ? 0 : it->second);
      }
      out << "," << q.respondents << "," << q.in_favor << ","
          << fmt(q.respondents ? static_cast<double>(q.in_favor) / q.respondents : 0.0, 6) << ","
          << q.p_value << "\n";
    }
  }
}

}  // namespace csi::analytics
