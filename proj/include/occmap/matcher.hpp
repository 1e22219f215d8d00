#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "occmap/embedding.hpp"
#include "occmap/error.hpp"
#include "occmap/text.hpp"

namespace occmap::matcher {

using embedding::EmbeddingVector;

enum class MatchErrc { DimensionMismatch, ZeroVector, ProviderMismatch, DuplicatePosting };

inline const char* to_string(MatchErrc c) {
  switch (c) {
    case MatchErrc::DimensionMismatch: return "DimensionMismatch";
    case MatchErrc::ZeroVector: return "ZeroVector";
    case MatchErrc::ProviderMismatch: return "ProviderMismatch";
    case MatchErrc::DuplicatePosting: return "DuplicatePosting";
  }
  return "?";
}

using MatchError = CodedError<MatchErrc>;

inline constexpr double kDefaultThreshold = 0.70;

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double squared_norm(std::span<const float> a) { return dot(a, a); }

// Every score in this module goes through here, so index scans and direct
// cosine() calls agree bit for bit.
inline double cosine_from(double uv, double uu, double vv) { return uv / (std::sqrt(uu) * std::sqrt(vv)); }

inline double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw MatchError(MatchErrc::DimensionMismatch,
                     "dimension " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  const double uu = squared_norm(u);
  const double vv = squared_norm(v);
  if (!(uu > 0.0) || !(vv > 0.0)) throw MatchError(MatchErrc::ZeroVector, "cosine of a zero vector");
  return cosine_from(dot(u, v), uu, vv);
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) { return cosine(u.values(), v.values()); }

// Flat, immutable-after-build store of posting vectors with one provider tag
// and dimension.
class VectorIndex {
 public:
  void add(std::string posting_id, std::string title, const EmbeddingVector& v) {
    if (ids_.empty() && dimension_ == 0) {
      dimension_ = v.dimension();
      provider_tag_ = v.provider_tag();
    }
    if (v.provider_tag() != provider_tag_) {
      throw MatchError(MatchErrc::ProviderMismatch,
                       "vector for " + posting_id + " is from " + v.provider_tag() + ", index holds " + provider_tag_);
    }
    if (v.dimension() != dimension_) {
      throw MatchError(MatchErrc::DimensionMismatch, "vector for " + posting_id + " has dimension " +
                                                         std::to_string(v.dimension()) + ", index holds " +
                                                         std::to_string(dimension_));
    }
    const double nn = squared_norm(v.values());
    if (!(nn > 0.0)) throw MatchError(MatchErrc::ZeroVector, "zero vector for " + posting_id);
    if (!seen_.insert(posting_id).second) throw MatchError(MatchErrc::DuplicatePosting, "duplicate posting " + posting_id);
    ids_.push_back(std::move(posting_id));
    titles_.push_back(std::move(title));
    values_.insert(values_.end(), v.values().begin(), v.values().end());
    norms2_.push_back(nn);
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dimension() const { return dimension_; }
  const std::string& provider_tag() const { return provider_tag_; }
  const std::string& posting_id(std::size_t i) const { return ids_[i]; }
  const std::string& title(std::size_t i) const { return titles_[i]; }
  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dimension_, dimension_}; }
  double squared_norm_of(std::size_t i) const { return norms2_[i]; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> titles_;
  std::vector<float> values_;
  std::vector<double> norms2_;
  std::unordered_set<std::string> seen_;
  std::size_t dimension_ = 0;
  std::string provider_tag_;
};

struct MatchResult {
  std::string driver_id;
  std::string posting_id;
  std::string title;
  double score = 0.0;

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

inline bool ranks_before(const MatchResult& a, const MatchResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.posting_id < b.posting_id;
}

// All postings scoring at or above `threshold`, best first, ties by posting id.
inline std::vector<MatchResult> rank_matches(const EmbeddingVector& query, const VectorIndex& index,
                                             double threshold = kDefaultThreshold,
                                             std::optional<std::size_t> top_k = std::nullopt,
                                             const std::string& driver_id = {}) {
  if (index.empty()) return {};
  if (query.provider_tag() != index.provider_tag()) {
    throw MatchError(MatchErrc::ProviderMismatch,
                     "query from " + query.provider_tag() + " against index of " + index.provider_tag());
  }
  if (query.dimension() != index.dimension()) {
    throw MatchError(MatchErrc::DimensionMismatch, "query dimension " + std::to_string(query.dimension()) +
                                                       ", index dimension " + std::to_string(index.dimension()));
  }
  const double qq = squared_norm(query.values());
  if (!(qq > 0.0)) throw MatchError(MatchErrc::ZeroVector, "zero query vector");

  struct Hit {
    double score;
    std::size_t row;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double s = cosine_from(dot(query.values(), index.row(i)), qq, index.squared_norm_of(i));
    if (s >= threshold) hits.push_back({s, i});
  }
  auto before = [&](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.posting_id(a.row) < index.posting_id(b.row);
  };
  if (top_k && *top_k < hits.size()) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(*top_k), hits.end(), before);
    hits.resize(*top_k);
  } else {
    std::sort(hits.begin(), hits.end(), before);
  }
  std::vector<MatchResult> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({driver_id, index.posting_id(h.row), index.title(h.row), h.score});
  return out;
}

struct DriverQuery {
  std::string driver_id;
  EmbeddingVector vector;
};

struct MatchOptions {
  double threshold = kDefaultThreshold;
  std::optional<std::size_t> top_k;
  std::map<std::string, double> driver_thresholds;  // overrides by driver id
  std::size_t parallelism = 1;
};

struct DriverMatches {
  std::map<std::string, std::vector<MatchResult>> results;
  std::map<std::string, std::string> failures;
};

inline double threshold_for(const MatchOptions& options, const std::string& driver_id) {
  const auto it = options.driver_thresholds.find(driver_id);
  return it == options.driver_thresholds.end() ? options.threshold : it->second;
}

// Drivers are matched independently; a failing driver is reported and the
// rest continue.
inline DriverMatches match_all_drivers(std::span<const DriverQuery> queries, const VectorIndex& index,
                                       const MatchOptions& options = {}) {
  std::vector<std::optional<std::vector<MatchResult>>> results(queries.size());
  std::vector<std::string> errors(queries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      try {
        results[i] = rank_matches(queries[i].vector, index, threshold_for(options, queries[i].driver_id),
                                  options.top_k, queries[i].driver_id);
      } catch (const MatchError& e) {
        errors[i] = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
  };
  const std::size_t pool = std::min(std::max<std::size_t>(1, options.parallelism), queries.size());
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
  }
  DriverMatches out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (results[i]) {
      out.results[queries[i].driver_id] = std::move(*results[i]);
    } else {
      out.failures[queries[i].driver_id] = errors[i];
    }
  }
  return out;
}

// Lower-cased word tokens minus a small stop list.
inline std::set<std::string> vocabulary(std::string_view s) {
  static const std::set<std::string> stop = {"a",   "an",   "and",  "are", "as",   "at",   "be",  "by",
                                             "for", "from", "in",   "is",  "it",   "of",   "on",  "or",
                                             "that", "the", "this", "to",  "with", "was",  "which"};
  std::set<std::string> out;
  embedding::for_each_token(s, [&](const embedding::Token& t) {
    if (!t.punct) {
      auto w = text::to_lower_ascii(s.substr(t.begin, t.end - t.begin));
      if (!stop.count(w)) out.insert(std::move(w));
    }
    return true;
  });
  return out;
}

// Results whose title shares no vocabulary with the query text. These are
// reported for review, never removed.
inline std::vector<MatchResult> flag_off_vocabulary(std::span<const MatchResult> results, std::string_view query_text) {
  const auto query_vocab = vocabulary(query_text);
  std::vector<MatchResult> flagged;
  for (const auto& r : results) {
    const auto title_vocab = vocabulary(r.title);
    const bool shared = std::any_of(title_vocab.begin(), title_vocab.end(),
                                    [&](const std::string& w) { return query_vocab.count(w) > 0; });
    if (!shared) flagged.push_back(r);
  }
  return flagged;
}

inline constexpr int kScoreDecimals = 8;

// One JSON object per line, score rendered with a fixed 8 decimals.
inline std::string match_to_json_line(const MatchResult& r) {
  return "{\"driver_id\":" + nlohmann::json(r.driver_id).dump() +
         ",\"posting_id\":" + nlohmann::json(r.posting_id).dump() + ",\"title\":" + nlohmann::json(r.title).dump() +
         ",\"score\":" + text::format_fixed(r.score, kScoreDecimals) + "}";
}

inline MatchResult match_from_json(const nlohmann::json& j) {
  return MatchResult{j.at("driver_id").get<std::string>(), j.at("posting_id").get<std::string>(),
                     j.at("title").get<std::string>(), j.at("score").get<double>()};
}

}  // namespace occmap::matcher
