#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "occmap/error.hpp"
#include "occmap/matcher.hpp"
#include "occmap/text.hpp"

namespace occmap::consolidate {

using matcher::MatchResult;

enum class ConsolidateErrc { UnresolvablePosting, RulesSyntax, RulesIo };

inline const char* to_string(ConsolidateErrc c) {
  switch (c) {
    case ConsolidateErrc::UnresolvablePosting: return "UnresolvablePosting";
    case ConsolidateErrc::RulesSyntax: return "RulesSyntax";
    case ConsolidateErrc::RulesIo: return "RulesIo";
  }
  return "?";
}

using ConsolidateError = CodedError<ConsolidateErrc>;

struct ConsolidationRules {
  std::vector<std::string> seniority_tokens = {"Senior",   "Lead",  "Junior",    "Principal", "Head of",
                                               "Chief",    "Staff", "Associate", "Graduate",  "Entry-Level"};
  // Lower-cased singular -> plural, consulted before the suffix rules.
  std::map<std::string, std::string> pluralization = {
      {"person", "People"}, {"child", "Children"}, {"staff", "Staff"}, {"personnel", "Personnel"},
      {"tech", "Techs"},    {"human", "Humans"},  {"german", "Germans"}};
  // Lower-cased alias -> canonical group name.
  std::map<std::string, std::string> custom_merges;
};

// Rules file:
//   # comment
//   [seniority]          one token per line; replaces the default list
//   [plural]             singular => plural
//   [merge]              alias => canonical (the default section)
inline ConsolidationRules parse_rules(std::istream& in, const std::string& source = "rules") {
  ConsolidationRules rules;
  std::string section = "merge";
  bool seniority_reset = false;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line(text::trim(raw));
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      throw ConsolidateError(ConsolidateErrc::RulesSyntax, source + ":" + std::to_string(line_no) + ": " + why);
    };
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = text::to_lower_ascii(text::trim(std::string_view(line).substr(1, line.size() - 2)));
      if (section != "seniority" && section != "plural" && section != "merge") fail("unknown section " + section);
      continue;
    }
    if (section == "seniority") {
      if (!seniority_reset) {
        rules.seniority_tokens.clear();
        seniority_reset = true;
      }
      rules.seniority_tokens.push_back(text::collapse_whitespace(line));
      continue;
    }
    const auto arrow = line.find("=>");
    if (arrow == std::string::npos) fail("expected 'alias => canonical'");
    const std::string lhs = text::collapse_whitespace(line.substr(0, arrow));
    const std::string rhs = text::collapse_whitespace(line.substr(arrow + 2));
    if (lhs.empty() || rhs.empty()) fail("empty side in mapping");
    if (section == "plural") {
      rules.pluralization[text::to_lower_ascii(lhs)] = rhs;
    } else {
      rules.custom_merges[text::to_lower_ascii(lhs)] = rhs;
    }
  }
  return rules;
}

inline ConsolidationRules load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConsolidateError(ConsolidateErrc::RulesIo, "cannot open rules file " + path);
  return parse_rules(in, path);
}

namespace detail {

inline bool is_separator_char(char c) {
  return c == ' ' || c == '-' || c == '|' || c == '/' || c == ',' || c == ':' || c == '(' || c == ')';
}

inline std::string trim_separators(std::string_view s) {
  std::size_t b = 0, e = s.size();
  // U+2013 en dash is three bytes.
  auto en_dash_at = [&](std::size_t i) { return i + 3 <= s.size() && s.substr(i, 3) == "\xE2\x80\x93"; };
  while (b < e) {
    if (is_separator_char(s[b])) {
      ++b;
    } else if (en_dash_at(b)) {
      b += 3;
    } else {
      break;
    }
  }
  while (e > b) {
    if (is_separator_char(s[e - 1]) && s[e - 1] != ')') {
      --e;
    } else if (e >= b + 3 && en_dash_at(e - 3)) {
      e -= 3;
    } else {
      break;
    }
  }
  return std::string(s.substr(b, e - b));
}

inline bool word_char(char c) { return text::is_ascii_alnum(c) || static_cast<unsigned char>(c) >= 0x80; }

// Strips seniority tokens from the front, and from the back when they follow a
// separator ("Cloud Engineer - Senior", "Cloud Engineer (Lead)"). Never
// returns an empty string when the input is non-empty.
inline std::string strip_seniority(std::string s, const std::vector<std::string>& tokens) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& tok : tokens) {
      if (tok.empty() || s.size() <= tok.size()) continue;
      if (text::iequals(std::string_view(s).substr(0, tok.size()), tok) && !word_char(s[tok.size()])) {
        std::string rest = trim_separators(std::string_view(s).substr(tok.size()));
        if (!rest.empty()) {
          s = std::move(rest);
          changed = true;
        }
      }
      if (s.size() <= tok.size()) continue;
      std::string_view sv(s);
      if (!sv.empty() && sv.back() == ')') {
        // "(Lead)" style suffix.
        const auto open = sv.rfind('(');
        if (open != std::string_view::npos && open > 0 &&
            text::iequals(text::trim(sv.substr(open + 1, sv.size() - open - 2)), tok)) {
          std::string rest = trim_separators(sv.substr(0, open));
          if (!rest.empty()) {
            s = std::move(rest);
            changed = true;
            continue;
          }
        }
      }
      const std::size_t at = s.size() - tok.size();
      if (text::iequals(std::string_view(s).substr(at), tok) && !word_char(s[at - 1])) {
        // Require a real separator before a trailing token, so "Team Lead" stays.
        const std::string_view before = text::trim(std::string_view(s).substr(0, at));
        const bool separated = !before.empty() && (is_separator_char(before.back()) && before.back() != ' ');
        const bool en_dash = before.size() >= 3 && before.substr(before.size() - 3) == "\xE2\x80\x93";
        if (separated || en_dash) {
          std::string rest = trim_separators(before);
          if (!rest.empty()) {
            s = std::move(rest);
            changed = true;
          }
        }
      }
    }
  }
  return s;
}

inline bool has_lower(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

inline bool all_upper_letters(std::string_view w) {
  bool any = false;
  for (char c : w) {
    if (c >= 'a' && c <= 'z') return false;
    if (c >= 'A' && c <= 'Z') any = true;
  }
  return any;
}

// An all-caps title with a word of four or more letters is shouting.
inline std::string unshout(std::string s) {
  if (!has_lower(s)) {
    std::size_t longest = 0, run = 0;
    for (char c : s) {
      run = (c >= 'A' && c <= 'Z') ? run + 1 : 0;
      longest = std::max(longest, run);
    }
    if (longest >= 4) s = text::to_lower_ascii(s);
  }
  return s;
}

// Capitalizes lower-case words (small connectives stay lower unless first or
// last); acronyms and mixed-case words are kept.
inline std::string title_case(std::string s) {
  static const std::set<std::string> small = {"a", "an", "and", "at", "for", "in", "of", "on", "or", "the", "to", "with"};
  bool first = true;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!word_char(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && word_char(s[j])) ++j;
    const std::string word = s.substr(i, j - i);
    const bool all_lower = std::all_of(word.begin(), word.end(), [](char c) { return !(c >= 'A' && c <= 'Z'); });
    const bool last = j >= s.size() || std::none_of(s.begin() + static_cast<std::ptrdiff_t>(j), s.end(), word_char);
    if (all_lower && (first || last || !small.count(word)) && word[0] >= 'a' && word[0] <= 'z') {
      s[i] = static_cast<char>(s[i] - 'a' + 'A');
    }
    first = false;
    i = j;
  }
  return s;
}

inline bool is_consonant(char c) {
  c = static_cast<char>(text::ascii_lower(c));
  return c >= 'a' && c <= 'z' && c != 'a' && c != 'e' && c != 'i' && c != 'o' && c != 'u';
}

inline bool ends_with_ci(std::string_view w, std::string_view suffix) {
  return w.size() >= suffix.size() && text::iequals(w.substr(w.size() - suffix.size()), suffix);
}

inline std::string pluralize_word(const std::string& w, const std::map<std::string, std::string>& irregular) {
  if (w.empty()) return w;
  const std::string lower = text::to_lower_ascii(w);
  if (auto it = irregular.find(lower); it != irregular.end()) return it->second;
  // Already a configured plural output: stable.
  for (const auto& [sing, plural] : irregular) {
    if (text::iequals(plural, w)) return w;
  }
  if (!std::isalpha(static_cast<unsigned char>(w.back()))) return w;
  if (all_upper_letters(w)) return w + "s";
  if (ends_with_ci(w, "s") || ends_with_ci(w, "ing") || ends_with_ci(w, "men")) return w;
  if (ends_with_ci(w, "x") || ends_with_ci(w, "z") || ends_with_ci(w, "ch") || ends_with_ci(w, "sh")) return w + "es";
  if (w.size() >= 2 && ends_with_ci(w, "y") && is_consonant(w[w.size() - 2])) return w.substr(0, w.size() - 1) + "ies";
  if (ends_with_ci(w, "man")) return w.substr(0, w.size() - 3) + w.substr(w.size() - 3, 1) + "en";
  return w + "s";
}

// Pluralizes the last word before any qualifier (" - ", " | ", ", ", " (").
inline std::string pluralize_title(const std::string& s, const std::map<std::string, std::string>& irregular) {
  std::size_t head_end = s.size();
  for (std::string_view sep : {" - ", " \xE2\x80\x93 ", " | ", ", ", " (", " / "}) {
    head_end = std::min(head_end, s.find(sep));
  }
  std::size_t end = head_end;
  while (end > 0 && !word_char(s[end - 1])) --end;
  std::size_t begin = end;
  while (begin > 0 && word_char(s[begin - 1])) --begin;
  if (begin == end) return s;
  return s.substr(0, begin) + pluralize_word(s.substr(begin, end - begin), irregular) + s.substr(end);
}

inline std::optional<std::string> merge_target(const std::string& s, const ConsolidationRules& rules) {
  if (rules.custom_merges.empty()) return std::nullopt;
  const std::string key = text::to_lower_ascii(s);
  if (auto it = rules.custom_merges.find(key); it != rules.custom_merges.end()) return it->second;
  for (const auto& [alias, target] : rules.custom_merges) {
    if (text::iequals(target, s)) return target;
  }
  return std::nullopt;
}

}  // namespace detail

// Group name for a job title: seniority stripped, whitespace collapsed,
// words capitalized, head noun pluralized; custom merges win at any stage.
inline std::string canonical_title(std::string_view title, const ConsolidationRules& rules = {}) {
  std::string s = text::collapse_whitespace(title);
  if (s.empty()) return s;
  if (auto t = detail::merge_target(s, rules)) return *t;
  s = detail::strip_seniority(std::move(s), rules.seniority_tokens);
  if (auto t = detail::merge_target(s, rules)) return *t;
  s = detail::unshout(std::move(s));
  s = detail::pluralize_title(s, rules.pluralization);
  s = detail::title_case(std::move(s));
  if (auto t = detail::merge_target(s, rules)) return *t;
  return s;
}

struct PostingRef {
  std::string title;
  std::optional<std::string> company;
};

using PostingDirectory = std::unordered_map<std::string, PostingRef>;

struct OccupationGroup {
  std::string canonical_title;
  std::set<std::string> member_posting_ids;
  std::set<std::string> member_titles;
  std::size_t distinct_count = 0;
  double best_score = 0.0;

  friend bool operator==(const OccupationGroup&, const OccupationGroup&) = default;
};

inline bool group_before(const OccupationGroup& a, const OccupationGroup& b) {
  if (a.best_score != b.best_score) return a.best_score > b.best_score;
  return a.canonical_title < b.canonical_title;
}

// Groups matches by canonical title. Reposts of one company's role in several
// locations count once: distinct_count is the number of distinct
// (canonical title, company) pairs, and a posting without a company counts
// on its own.
inline std::vector<OccupationGroup> consolidate(std::span<const MatchResult> matches, const PostingDirectory& postings,
                                                const ConsolidationRules& rules = {}) {
  struct Acc {
    OccupationGroup group;
    std::set<std::string> companies;
    std::size_t anonymous = 0;
  };
  std::map<std::string, Acc> by_title;
  std::unordered_map<std::string, std::string> canonical_cache;
  for (const auto& m : matches) {
    const auto it = postings.find(m.posting_id);
    if (it == postings.end()) {
      throw ConsolidateError(ConsolidateErrc::UnresolvablePosting, "unknown posting " + m.posting_id);
    }
    auto [cit, fresh] = canonical_cache.try_emplace(it->second.title);
    if (fresh) cit->second = canonical_title(it->second.title, rules);
    const std::string& canon = cit->second;
    Acc& acc = by_title[canon];
    if (acc.group.member_posting_ids.empty()) {
      acc.group.canonical_title = canon;
      acc.group.best_score = m.score;
    }
    if (!acc.group.member_posting_ids.insert(m.posting_id).second) continue;
    acc.group.member_titles.insert(text::collapse_whitespace(it->second.title));
    acc.group.best_score = std::max(acc.group.best_score, m.score);
    const std::string company = it->second.company ? text::to_lower_ascii(text::collapse_whitespace(*it->second.company)) : "";
    if (company.empty()) {
      ++acc.anonymous;
    } else {
      acc.companies.insert(company);
    }
  }
  std::vector<OccupationGroup> out;
  out.reserve(by_title.size());
  for (auto& [canon, acc] : by_title) {
    acc.group.distinct_count = acc.companies.size() + acc.anonymous;
    out.push_back(std::move(acc.group));
  }
  std::sort(out.begin(), out.end(), group_before);
  return out;
}

inline std::vector<OccupationGroup> top_n(std::span<const OccupationGroup> groups, std::size_t n = 10) {
  return {groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(std::min(n, groups.size()))};
}

// Half-open bins [k*width, (k+1)*width), keyed by k.
struct Histogram {
  double width = 0.01;
  std::map<long long, std::size_t> bins;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, c] : bins) n += c;
    return n;
  }
};

// Small slack keeps scores such as 0.70 (stored as 0.6999...) in their
// printed bin.
inline long long bin_index(double score, double width) { return static_cast<long long>(std::floor(score / width + 1e-9)); }

inline int decimals_for(double width) {
  for (int d = 0; d <= 9; ++d) {
    const double scaled = width * std::pow(10.0, d);
    if (std::abs(scaled - std::round(scaled)) < 1e-9 * std::max(1.0, scaled)) return d;
  }
  return 9;
}

inline std::string bin_label(long long k, double width) {
  return text::format_fixed(static_cast<double>(k) * width, std::max(2, decimals_for(width)));
}

inline Histogram frequency_distribution(std::span<const double> scores, double bin_width = 0.01) {
  Histogram h;
  h.width = bin_width;
  for (const double s : scores) ++h.bins[bin_index(s, bin_width)];
  return h;
}

inline Histogram frequency_distribution(std::span<const MatchResult> matches, double bin_width = 0.01) {
  std::vector<double> scores;
  scores.reserve(matches.size());
  for (const auto& m : matches) scores.push_back(m.score);
  return frequency_distribution(std::span<const double>(scores), bin_width);
}

}  // namespace occmap::consolidate
