#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csi/domain.hpp"
#include "csi/events.hpp"
#include "csi/preference.hpp"
#include "csi/stats.hpp"

namespace csi::analytics {

// Unicode scalar values in a UTF-8 string.
std::size_t unicode_scalar_count(std::string_view utf8);

// Per-participant counts and rates over human messages with
// timestamp <= window. Every roster member gets a row, zero if silent.
std::vector<UserContribution> compute_contributions(std::span<const Message> messages,
                                                    std::span<const ParticipantId> roster,
                                                    double window_s);

double mean(std::span<const double> values);
// Sample variance (n - 1 denominator); 0 for fewer than two values.
double sample_variance(std::span<const double> values);

// Inclusive linear interpolation at rank q * (N - 1) over the sorted values.
double percentile(std::span<const double> values, double q);

// p90 / p10; nullopt when p10 is zero (ratio undefined).
std::optional<double> contribution_ratio(std::span<const double> values);
std::optional<double> contribution_ratio_from_percentiles(double p10, double p90);

// to / from - 1, as a fraction.
double relative_change(double from, double to);

struct Distribution {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // sample
  double p10 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p90 = 0.0;
  std::optional<double> contribution_ratio;
};

Distribution describe(std::span<const double> values);

struct ContributionStats {
  double window_s = 0.0;
  std::vector<UserContribution> users;
  Distribution messages_per_minute;
  Distribution characters_per_minute;
};

// Roster from participant_joined events, window from the session config
// unless given. Throws on an empty roster.
ContributionStats contribution_stats(std::span<const Event> transcript,
                                     std::optional<double> window_s = std::nullopt);

enum class SurveyAnswer { chat_by_a_lot, chat_by_a_little, no_preference, swarm_by_a_little, swarm_by_a_lot };

std::string to_string(SurveyAnswer answer);
SurveyAnswer parse_survey_answer(const std::string& text);
bool favors_swarm(SurveyAnswer answer);

struct SurveyResponse {
  ParticipantId participant;
  std::string question;
  SurveyAnswer answer = SurveyAnswer::no_preference;

  bool operator==(const SurveyResponse&) const = default;
};

// CSV with header participant,question,answer. A repeated
// (participant, question) keeps the last row.
std::vector<SurveyResponse> parse_survey_csv(std::string_view text);
std::string write_survey_csv(std::span<const SurveyResponse> responses);

struct SurveyQuestionSummary {
  std::string question;
  std::map<SurveyAnswer, std::size_t> counts;
  std::size_t respondents = 0;
  std::size_t in_favor = 0;  // either swarm-favoring answer
  double p_value = 1.0;      // one-sided binomial, p0 = 0.5
};

std::vector<SurveyQuestionSummary> summarize_survey(std::span<const SurveyResponse> responses);

struct PairedComparison {
  std::size_t pairs = 0;
  std::optional<stats::TTestResult> messages;
  std::optional<stats::TTestResult> characters;
};

struct Report {
  ContributionStats chat;
  ContributionStats swarm;
  PairedComparison paired;
  std::optional<std::vector<SurveyQuestionSummary>> survey;
};

// Pairs participants present in both transcripts by id.
Report build_report(std::span<const Event> chat, std::span<const Event> swarm,
                    std::optional<std::vector<SurveyResponse>> survey);

// "+46%" style formatting of a relative change.
std::string format_percent_change(double fraction);

std::string render_markdown(const Report& report);
// Writes report.md and tables/{conditions,percentiles,per_user,tests,survey}.csv.
void write_report(const Report& report, const std::filesystem::path& out_dir);

}  // namespace csi::analytics
