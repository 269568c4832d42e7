#include "uiqbench/uiqtools.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "uiqbench/error.hpp"

namespace uiqbench {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<UiqRule> make_rules() {
  const std::vector<std::string> question_openers = {"Can you", "Do you", "Are there", "Is there"};
  const std::vector<std::string> imperative_openers = {"Find", "Search for", "Locate", "Retrieve"};

  UiqRule question;
  question.query_type = QueryType::kQuestion;
  question.allowed_openers = question_openers;
  question.min_words = 8;
  question.max_words = 18;
  question.terminal = Terminal::kRequireQuestionMark;

  UiqRule imperative;
  imperative.query_type = QueryType::kImperative;
  imperative.allowed_openers = imperative_openers;
  imperative.min_words = 8;
  imperative.max_words = 15;
  imperative.terminal = Terminal::kForbidQuestionMark;

  UiqRule keyphrase;
  keyphrase.query_type = QueryType::kKeyphrase;
  keyphrase.tag_count_range = {{3, 6}};
  keyphrase.words_per_tag_range = {{1, 4}};
  keyphrase.min_words = 3;
  keyphrase.max_words = 24;
  keyphrase.require_lowercase = true;

  UiqRule paraphrase;
  paraphrase.query_type = QueryType::kParaphrase;
  paraphrase.forbidden_openers = question_openers;
  paraphrase.forbidden_openers.insert(paraphrase.forbidden_openers.end(), imperative_openers.begin(),
                                      imperative_openers.end());
  paraphrase.min_words = 12;
  paraphrase.max_words = 25;
  paraphrase.terminal = Terminal::kForbidQuestionMark;

  UiqRule negative;
  negative.query_type = QueryType::kNegative;
  negative.min_words = 15;
  negative.max_words = 35;
  negative.required_negation_markers = {"without", "not", "excluding"};

  return {question, imperative, keyphrase, paraphrase, negative};
}

bool starts_with_opener(std::string_view text, std::string_view opener) {
  return text.size() > opener.size() && text.substr(0, opener.size()) == opener &&
         is_space(text[opener.size()]);
}

std::string lowercase_word_core(std::string_view w) {
  std::size_t b = 0, e = w.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
  std::string out(w.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "/";
    out += items[i];
  }
  return out;
}

}  // namespace

const UiqRule& rule_for(QueryType type) {
  static const std::vector<UiqRule> rules = make_rules();
  return rules.at(static_cast<std::size_t>(type));
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::kMissingOpener:
      return "missing_opener";
    case ViolationCode::kForbiddenOpener:
      return "forbidden_opener";
    case ViolationCode::kTooFewWords:
      return "too_few_words";
    case ViolationCode::kTooManyWords:
      return "too_many_words";
    case ViolationCode::kMissingQuestionMark:
      return "missing_question_mark";
    case ViolationCode::kForbiddenQuestionMark:
      return "forbidden_question_mark";
    case ViolationCode::kTooFewTags:
      return "too_few_tags";
    case ViolationCode::kTooManyTags:
      return "too_many_tags";
    case ViolationCode::kTagWordCount:
      return "tag_word_count";
    case ViolationCode::kNotLowercase:
      return "not_lowercase";
    case ViolationCode::kMissingNegationMarker:
      return "missing_negation_marker";
  }
  return "unknown";
}

bool ValidationResult::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

ValidationResult validate_query(std::string_view raw, QueryType type) {
  const UiqRule& rule = rule_for(type);
  const std::string_view text = trim(raw);
  if (text.empty()) throw ValidationError("empty query text");

  ValidationResult res;
  auto flag = [&](ViolationCode code, std::string detail) {
    res.violations.push_back({code, std::move(detail)});
  };

  if (!rule.allowed_openers.empty() &&
      std::none_of(rule.allowed_openers.begin(), rule.allowed_openers.end(),
                   [&](const std::string& o) { return starts_with_opener(text, o); })) {
    flag(ViolationCode::kMissingOpener, "must start with one of " + join(rule.allowed_openers));
  }
  for (const auto& o : rule.forbidden_openers) {
    if (starts_with_opener(text, o)) {
      flag(ViolationCode::kForbiddenOpener, "must not open with \"" + o + "\"");
      break;
    }
  }

  if (rule.tag_count_range) {
    std::vector<std::string_view> tags;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      tags.push_back(trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const auto [lo, hi] = *rule.tag_count_range;
    if (tags.size() < lo) {
      flag(ViolationCode::kTooFewTags, std::to_string(tags.size()) + " tags < " + std::to_string(lo));
    } else if (tags.size() > hi) {
      flag(ViolationCode::kTooManyTags, std::to_string(tags.size()) + " tags > " + std::to_string(hi));
    }
    if (rule.words_per_tag_range) {
      const auto [wlo, whi] = *rule.words_per_tag_range;
      for (std::size_t t = 0; t < tags.size(); ++t) {
        const auto n = word_count(tags[t]);
        if (n < wlo || n > whi) {
          flag(ViolationCode::kTagWordCount, "tag " + std::to_string(t + 1) + " has " + std::to_string(n) +
                                                 " words (allowed " + std::to_string(wlo) + "-" +
                                                 std::to_string(whi) + ")");
        }
      }
    }
  } else {
    const std::size_t n = word_count(text);
    if (n < rule.min_words) {
      flag(ViolationCode::kTooFewWords,
           "word count " + std::to_string(n) + " < " + std::to_string(rule.min_words));
    } else if (n > rule.max_words) {
      flag(ViolationCode::kTooManyWords,
           "word count " + std::to_string(n) + " > " + std::to_string(rule.max_words));
    }
  }

  switch (rule.terminal) {
    case Terminal::kRequireQuestionMark:
      if (text.back() != '?') flag(ViolationCode::kMissingQuestionMark, "must end with \"?\"");
      break;
    case Terminal::kForbidQuestionMark:
      if (text.find('?') != std::string_view::npos) {
        flag(ViolationCode::kForbiddenQuestionMark, "must not contain \"?\"");
      }
      break;
    case Terminal::kAny:
      break;
  }

  if (rule.require_lowercase &&
      std::any_of(text.begin(), text.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); })) {
    flag(ViolationCode::kNotLowercase, "must be lowercase");
  }

  if (!rule.required_negation_markers.empty()) {
    const auto words = split_words(text);
    const bool found = std::any_of(words.begin(), words.end(), [&](std::string_view w) {
      const auto core = lowercase_word_core(w);
      return std::find(rule.required_negation_markers.begin(), rule.required_negation_markers.end(),
                       core) != rule.required_negation_markers.end();
    });
    if (!found) {
      flag(ViolationCode::kMissingNegationMarker,
           "must state exclusions with " + join(rule.required_negation_markers));
    }
  }

  res.valid = res.violations.empty();
  return res;
}

bool check_length_constraint(std::string_view query, std::string_view caption, std::size_t slack) {
  if (trim(query).empty() || trim(caption).empty()) {
    throw ValidationError("length constraint needs non-empty query and caption");
  }
  const auto a = word_count(query), b = word_count(caption);
  return (a > b ? a - b : b - a) <= slack;
}

void check_rating(const Rating& r) {
  if (r.score < 1 || r.score > 5) {
    throw ValidationError("rating for sample '" + r.sample_id + "' has score " + std::to_string(r.score) +
                          " outside 1..5");
  }
}

std::vector<Rating> load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<Rating> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      Rating r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.query_type = std::string(to_string(parse_query_type(j.at("query_type").get<std::string>())));
      r.rater = j.at("rater").get<std::string>();
      r.dataset = j.value("dataset", std::string{});
      const auto& score = j.at("score");
      if (!score.is_number_integer()) throw ValidationError("score must be an integer");
      r.score = score.get<int>();
      check_rating(r);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed rating: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

std::string rater_kind(std::string_view rater) {
  if (rater == "llm" || rater.rfind("llm:", 0) == 0) return "llm";
  if (rater.rfind("human:", 0) == 0) return "human";
  throw ValidationError("rater '" + std::string(rater) + "' is neither human:<id> nor llm");
}

std::map<std::vector<std::string>, LikertSummary> likert_summary(const std::vector<Rating>& ratings,
                                                                 const std::vector<GroupKey>& group_by,
                                                                 StdKind std_kind) {
  std::map<std::vector<std::string>, std::vector<int>> groups;
  for (const auto& r : ratings) {
    check_rating(r);
    std::vector<std::string> key;
    for (auto g : group_by) {
      switch (g) {
        case GroupKey::kQueryType:
          key.push_back(r.query_type);
          break;
        case GroupKey::kRaterKind:
          key.push_back(rater_kind(r.rater));
          break;
        case GroupKey::kRater:
          key.push_back(r.rater);
          break;
        case GroupKey::kDataset:
          key.push_back(r.dataset);
          break;
      }
    }
    groups[key].push_back(r.score);
  }
  std::map<std::vector<std::string>, LikertSummary> out;
  for (const auto& [key, scores] : groups) {
    LikertSummary s;
    s.n = scores.size();
    double sum = 0.0;
    for (int v : scores) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (int v : scores) ss += (v - s.mean) * (v - s.mean);
    const std::size_t denom = std_kind == StdKind::kSample ? s.n - 1 : s.n;
    s.std = denom == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(denom));
    out.emplace(key, s);
  }
  return out;
}

PearsonResult pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("pearson_r: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("pearson_r: need at least 3 points");
  // Extended precision keeps exactly linear data at |r| == 1 after rounding.
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("pearson_r: non-finite input");
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<long double>(n);
  my /= static_cast<long double>(n);
  long double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) throw ValidationError("pearson_r: zero variance, correlation undefined");
  double r = static_cast<double>(sxy / std::sqrt(sxx * syy));
  r = std::clamp(r, -1.0, 1.0);

  PearsonResult res;
  res.r = r;
  if (std::abs(r) == 1.0) {
    res.p_value = 0.0;
  } else {
    const double dof = static_cast<double>(n - 2);
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    boost::math::students_t dist(dof);
    res.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return res;
}

double kl_divergence(const std::vector<double>& p_counts, const std::vector<double>& q_counts,
                     double smoothing) {
  if (p_counts.size() != kLikertBins || q_counts.size() != kLikertBins) {
    throw ValidationError("kl_divergence: histograms must have 5 bins");
  }
  if (!(smoothing > 0.0)) throw ValidationError("kl_divergence: smoothing must be positive");
  double tp = 0.0, tq = 0.0;
  for (std::size_t i = 0; i < kLikertBins; ++i) {
    if (p_counts[i] < 0.0 || q_counts[i] < 0.0) throw ValidationError("kl_divergence: negative count");
    tp += p_counts[i];
    tq += q_counts[i];
  }
  if (!(tp > 0.0) || !(tq > 0.0)) throw ValidationError("kl_divergence: empty histogram");
  const double zp = tp + smoothing * kLikertBins, zq = tq + smoothing * kLikertBins;
  double kl = 0.0;
  for (std::size_t i = 0; i < kLikertBins; ++i) {
    const double p = (p_counts[i] + smoothing) / zp;
    const double q = (q_counts[i] + smoothing) / zq;
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

std::vector<double> likert_histogram(const std::vector<Rating>& ratings) {
  std::vector<double> h(kLikertBins, 0.0);
  for (const auto& r : ratings) {
    check_rating(r);
    h[static_cast<std::size_t>(r.score - 1)] += 1.0;
  }
  return h;
}

}  // namespace uiqbench
