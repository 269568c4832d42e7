#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uiqbench/embedstore.hpp"

namespace uiqbench {

enum class Terminal { kAny, kRequireQuestionMark, kForbidQuestionMark };

/// Format grammar for one UIQ type.
struct UiqRule {
  QueryType query_type;
  std::vector<std::string> allowed_openers;    // empty: no opener requirement
  std::vector<std::string> forbidden_openers;  // declarative types must not open like a question/command
  std::size_t min_words = 0;
  std::size_t max_words = 0;
  Terminal terminal = Terminal::kAny;
  std::optional<std::pair<std::size_t, std::size_t>> tag_count_range;
  std::optional<std::pair<std::size_t, std::size_t>> words_per_tag_range;
  bool require_lowercase = false;
  std::vector<std::string> required_negation_markers;  // at least one must appear as a word
};

const UiqRule& rule_for(QueryType type);

enum class ViolationCode {
  kMissingOpener,
  kForbiddenOpener,
  kTooFewWords,
  kTooManyWords,
  kMissingQuestionMark,
  kForbiddenQuestionMark,
  kTooFewTags,
  kTooManyTags,
  kTagWordCount,
  kNotLowercase,
  kMissingNegationMarker,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string detail;
};

struct ValidationResult {
  bool valid = true;
  std::vector<Violation> violations;

  bool has(ViolationCode code) const;
};

// Maximal non-whitespace runs.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t word_count(std::string_view text);

ValidationResult validate_query(std::string_view text, QueryType type);

// |words(query) - words(caption)| <= slack
bool check_length_constraint(std::string_view query, std::string_view caption, std::size_t slack = 2);

struct Rating {
  std::string sample_id;
  std::string query_type;
  std::string rater;    // "human:<id>" or "llm"
  std::string dataset;  // optional
  int score = 0;        // 1..5
};

// Ratings in one JSON object per line; scores outside 1..5 are rejected.
std::vector<Rating> load_ratings(const std::filesystem::path& path);
void check_rating(const Rating& r);

enum class GroupKey { kQueryType, kRaterKind, kRater, kDataset };
enum class StdKind { kSample, kPopulation };

struct LikertSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// "human" or "llm" from a rater label.
std::string rater_kind(std::string_view rater);

// Groups are keyed by the concatenated group values ("" for the overall group
// when `group_by` is empty). With the sample form, a singleton group has std 0.
std::map<std::vector<std::string>, LikertSummary> likert_summary(const std::vector<Rating>& ratings,
                                                                 const std::vector<GroupKey>& group_by,
                                                                 StdKind std_kind = StdKind::kSample);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, t distribution with n-2 dof
};

PearsonResult pearson_r(const std::vector<double>& x, const std::vector<double>& y);

inline constexpr std::size_t kLikertBins = 5;
inline constexpr double kDefaultKlSmoothing = 0.5;

// KL(P || Q) in nats after adding `smoothing` to each bin and renormalizing.
double kl_divergence(const std::vector<double>& p_counts, const std::vector<double>& q_counts,
                     double smoothing = kDefaultKlSmoothing);

// Histogram of 1..5 scores.
std::vector<double> likert_histogram(const std::vector<Rating>& ratings);

}  // namespace uiqbench
