#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "occmap/embedding_vector.hpp"
#include "occmap/ingest.hpp"
#include "occmap/text.hpp"
#include "occmap/vector_cache.hpp"

namespace occmap::embedding {

// Budget tokenizer: a token is either a maximal run of bytes that are neither
// ASCII whitespace/control nor ASCII punctuation, or a single ASCII
// punctuation character. Non-ASCII bytes always belong to word runs, so
// multi-byte characters are never split.
struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool punct = false;
};

inline bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

inline bool is_token_separator(unsigned char c) { return c <= 32 || c == 127; }

// Calls f(Token) for each token in order; stops early when f returns false.
template <typename F>
void for_each_token(std::string_view s, F&& f) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_token_separator(c)) {
      ++i;
      continue;
    }
    Token t{i, i + 1, is_ascii_punct(c)};
    if (!t.punct) {
      while (t.end < n) {
        const auto d = static_cast<unsigned char>(s[t.end]);
        if (is_token_separator(d) || is_ascii_punct(d)) break;
        ++t.end;
      }
    }
    if (!f(t)) return;
    i = t.end;
  }
}

inline std::size_t count_tokens(std::string_view s) {
  std::size_t n = 0;
  for_each_token(s, [&](const Token&) {
    ++n;
    return true;
  });
  return n;
}

struct TokenBudget {
  std::size_t max_tokens = 8192;
};

// Longest prefix holding at most max_tokens tokens, cut at the end of the last
// kept token.
inline std::string_view truncate_to_budget(std::string_view s, TokenBudget budget) {
  std::size_t seen = 0;
  std::size_t cut = s.size();
  bool over = false;
  for_each_token(s, [&](const Token& t) {
    if (seen == budget.max_tokens) {
      over = true;
      return false;
    }
    ++seen;
    cut = t.end;
    return true;
  });
  if (!over) return s;
  if (budget.max_tokens == 0) return s.substr(0, 0);
  return s.substr(0, cut);
}

// Implementations must be safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& tag() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t max_input_tokens() const = 0;
  virtual std::size_t max_batch_size() const { return 1; }
  // One vector per text, in order. Throws EmbeddingError with InputTooLong
  // when a text is rejected for length, ProviderUnavailable when the service
  // cannot be reached after retries.
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

inline constexpr std::size_t kDefaultLocalDimension = 512;

inline std::uint64_t local_embed_seed() {
  static const std::uint64_t seed = text::fnv1a64("occmap/local-embed/v1");
  return seed;
}

inline std::string local_provider_tag(std::size_t dimension) {
  return "local-hash-v1/d" + std::to_string(dimension);
}

// Bucket index and sign for one (lower-cased) word token.
inline std::pair<std::size_t, int> local_bucket(std::string_view token, std::size_t dimension) {
  const std::uint64_t h = text::fnv1a64(token, local_embed_seed());
  return {static_cast<std::size_t>(h % dimension), (h >> 63) ? -1 : 1};
}

// Hashed bag of words: ASCII-lowercased word tokens (punctuation tokens are
// ignored), FNV-1a with a fixed seed, bucket h mod D, sign from the top bit.
inline EmbeddingVector local_embed(std::string_view s, std::size_t dimension = kDefaultLocalDimension) {
  if (dimension == 0) throw EmbeddingError(EmbeddingErrc::InvalidVector, "dimension must be positive");
  std::vector<double> acc(dimension, 0.0);
  for_each_token(s, [&](const Token& t) {
    if (!t.punct) {
      const auto [idx, sign] = local_bucket(text::to_lower_ascii(s.substr(t.begin, t.end - t.begin)), dimension);
      acc[idx] += sign;
    }
    return true;
  });
  return EmbeddingVector::normalized(std::span<const double>(acc), local_provider_tag(dimension));
}

class LocalHashProvider final : public EmbeddingProvider {
 public:
  explicit LocalHashProvider(std::size_t dimension = kDefaultLocalDimension, std::size_t max_input_tokens = 8192)
      : dimension_(dimension), max_input_tokens_(max_input_tokens), tag_(local_provider_tag(dimension)) {}

  const std::string& tag() const override { return tag_; }
  std::size_t dimension() const override { return dimension_; }
  std::size_t max_input_tokens() const override { return max_input_tokens_; }
  std::size_t max_batch_size() const override { return 64; }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(local_embed(t, dimension_));
    return out;
  }

 private:
  std::size_t dimension_;
  std::size_t max_input_tokens_;
  std::string tag_;
};

using LogFn = std::function<void(const std::string&)>;

inline void default_log(const std::string& line) { std::cerr << line << '\n'; }

struct EmbedOptions {
  TokenBudget budget{};
  std::size_t parallelism = 1;
  LogFn log = default_log;
};

namespace detail {

inline void check_vector(const EmbeddingVector& v, const EmbeddingProvider& provider) {
  if (v.dimension() != provider.dimension() || v.provider_tag() != provider.tag() || !v.is_unit()) {
    throw EmbeddingError(EmbeddingErrc::InvalidVector,
                         "provider " + provider.tag() + " returned a vector of dimension " +
                             std::to_string(v.dimension()) + " with norm " + text::format_fixed(v.norm(), 9));
  }
}

inline std::size_t effective_budget(const EmbeddingProvider& provider, TokenBudget budget) {
  return std::min(budget.max_tokens, provider.max_input_tokens());
}

// One text through the provider. If the provider still reports the input as
// too long, re-truncate 10% tighter and try exactly once more.
inline EmbeddingVector embed_one(EmbeddingProvider& provider, const std::string& input, const LogFn& log,
                                 std::atomic<std::size_t>* texts_sent) {
  auto call = [&](const std::string& s) {
    if (texts_sent) texts_sent->fetch_add(1, std::memory_order_relaxed);
    auto out = provider.embed_batch(std::span<const std::string>(&s, 1));
    if (out.size() != 1) {
      throw EmbeddingError(EmbeddingErrc::InvalidVector, "provider returned " + std::to_string(out.size()) +
                                                             " vectors for 1 input");
    }
    check_vector(out.front(), provider);
    return std::move(out.front());
  };
  try {
    return call(input);
  } catch (const EmbeddingError& e) {
    if (e.code() != EmbeddingErrc::InputTooLong) throw;
    const std::size_t tokens = count_tokens(input);
    const std::size_t tighter = std::max<std::size_t>(1, tokens * 9 / 10);
    if (log) {
      log("provider " + provider.tag() + " rejected " + std::to_string(tokens) +
          " budgeted tokens as too long; retrying with " + std::to_string(tighter));
    }
    const std::string shorter(truncate_to_budget(input, TokenBudget{tighter}));
    try {
      return call(shorter);
    } catch (const EmbeddingError& again) {
      if (again.code() != EmbeddingErrc::InputTooLong) throw;
      throw EmbeddingError(EmbeddingErrc::BudgetTokenizerMismatch,
                           "provider " + provider.tag() + " still rejects input after truncation to " +
                               std::to_string(tighter) + " tokens");
    }
  }
}

}  // namespace detail

// The exact text that is sent to the provider (and keyed in the cache).
// Throws EmptyInput when nothing survives normalization.
inline std::string prepare_input(std::string_view s, const EmbeddingProvider& provider, TokenBudget budget) {
  if (ingest::normalize_text(s).empty()) throw EmbeddingError(EmbeddingErrc::EmptyInput, "empty text");
  return std::string(truncate_to_budget(s, TokenBudget{detail::effective_budget(provider, budget)}));
}

inline EmbeddingVector embed_text(std::string_view s, EmbeddingProvider& provider, const EmbedOptions& options = {},
                                  VectorCache* cache = nullptr) {
  const std::string input = prepare_input(s, provider, options.budget);
  const std::uint64_t key = cache_key(input);
  if (cache) {
    if (auto hit = cache->get(key, provider.tag())) return std::move(*hit);
  }
  EmbeddingVector v = detail::embed_one(provider, input, options.log, nullptr);
  if (cache) cache->put(key, v);
  return v;
}

struct EmbedItem {
  std::string id;
  std::string text;
};

struct EmbedFailure {
  std::string id;
  EmbeddingErrc code = EmbeddingErrc::EmptyInput;
  std::string message;
};

struct EmbedStats {
  std::size_t items = 0;
  std::size_t cache_hits = 0;
  std::size_t provider_texts = 0;
  std::size_t failures = 0;
};

using VectorSink = std::function<void(const std::string& id, const EmbeddingVector&)>;
using FailureSink = std::function<void(const EmbedFailure&)>;

// Embeds items in blocks. Provider calls within a block run on up to
// `parallelism` threads; cache writes and sink callbacks happen on the calling
// thread in input order, so outputs and cache bytes do not depend on the
// thread count.
inline EmbedStats embed_items(std::span<const EmbedItem> items, EmbeddingProvider& provider, VectorCache* cache,
                              const EmbedOptions& options, const VectorSink& on_vector,
                              const FailureSink& on_failure) {
  EmbedStats stats;
  stats.items = items.size();
  const std::size_t threads = std::max<std::size_t>(1, options.parallelism);
  const std::size_t batch_size = std::max<std::size_t>(1, provider.max_batch_size());
  const std::size_t block_size = std::max<std::size_t>(256, threads * batch_size * 4);
  std::atomic<std::size_t> texts_sent{0};

  struct Slot {
    std::string input;
    std::uint64_t key = 0;
    std::optional<EmbeddingVector> vector;
    std::optional<EmbedFailure> failure;
    long miss = -1;  // index into the block's unique-miss list
    bool cached = false;
  };
  struct Miss {
    std::size_t first_slot = 0;
    std::optional<EmbeddingVector> vector;
    std::optional<EmbeddingErrc> code;
    std::string message;
  };

  for (std::size_t base = 0; base < items.size(); base += block_size) {
    const std::size_t end = std::min(items.size(), base + block_size);
    std::vector<Slot> slots(end - base);
    std::vector<Miss> misses;
    std::unordered_map<std::uint64_t, std::size_t> miss_by_key;

    for (std::size_t i = base; i < end; ++i) {
      Slot& slot = slots[i - base];
      try {
        slot.input = prepare_input(items[i].text, provider, options.budget);
      } catch (const EmbeddingError& e) {
        slot.failure = EmbedFailure{items[i].id, e.code(), e.what()};
        continue;
      }
      slot.key = cache_key(slot.input);
      if (cache) {
        if (auto hit = cache->get(slot.key, provider.tag())) {
          slot.vector = std::move(hit);
          slot.cached = true;
          continue;
        }
      }
      auto [it, inserted] = miss_by_key.try_emplace(slot.key, misses.size());
      if (inserted) misses.push_back(Miss{i - base, std::nullopt, std::nullopt, {}});
      slot.miss = static_cast<long>(it->second);
    }

    const std::size_t batches = (misses.size() + batch_size - 1) / batch_size;
    std::atomic<std::size_t> next_batch{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t b = next_batch.fetch_add(1);
        if (b >= batches) return;
        const std::size_t lo = b * batch_size;
        const std::size_t hi = std::min(misses.size(), lo + batch_size);
        std::vector<std::string> inputs;
        for (std::size_t m = lo; m < hi; ++m) inputs.push_back(slots[misses[m].first_slot].input);
        bool per_item = inputs.size() == 1;
        if (!per_item) {
          try {
            texts_sent.fetch_add(inputs.size(), std::memory_order_relaxed);
            auto out = provider.embed_batch(inputs);
            if (out.size() != inputs.size()) {
              throw EmbeddingError(EmbeddingErrc::InvalidVector, "provider returned a short batch");
            }
            for (std::size_t m = lo; m < hi; ++m) {
              try {
                detail::check_vector(out[m - lo], provider);
                misses[m].vector = std::move(out[m - lo]);
              } catch (const EmbeddingError& e) {
                misses[m].code = e.code();
                misses[m].message = e.what();
              }
            }
          } catch (const EmbeddingError& e) {
            if (e.code() == EmbeddingErrc::InputTooLong) {
              per_item = true;
            } else {
              for (std::size_t m = lo; m < hi; ++m) {
                misses[m].code = e.code();
                misses[m].message = e.what();
              }
            }
          } catch (const std::exception& e) {
            for (std::size_t m = lo; m < hi; ++m) {
              misses[m].code = EmbeddingErrc::ProviderUnavailable;
              misses[m].message = e.what();
            }
          }
        }
        if (!per_item) continue;
        for (std::size_t m = lo; m < hi; ++m) {
          try {
            misses[m].vector = detail::embed_one(provider, inputs[m - lo], options.log, &texts_sent);
          } catch (const EmbeddingError& e) {
            misses[m].code = e.code();
            misses[m].message = e.what();
          } catch (const std::exception& e) {
            misses[m].code = EmbeddingErrc::ProviderUnavailable;
            misses[m].message = e.what();
          }
        }
      }
    };
    const std::size_t pool = std::min(threads, batches);
    if (pool <= 1) {
      worker();
    } else {
      std::vector<std::jthread> workers;
      for (std::size_t t = 0; t < pool; ++t) workers.emplace_back(worker);
    }

    for (std::size_t i = base; i < end; ++i) {
      Slot& slot = slots[i - base];
      if (slot.cached) ++stats.cache_hits;
      if (slot.miss >= 0) {
        Miss& m = misses[static_cast<std::size_t>(slot.miss)];
        if (m.vector) {
          if (cache && m.first_slot == i - base) cache->put(slot.key, *m.vector);
          slot.vector = *m.vector;
        } else {
          slot.failure = EmbedFailure{items[i].id, *m.code, m.message};
        }
      }
      if (slot.vector) {
        if (on_vector) on_vector(items[i].id, *slot.vector);
      } else {
        ++stats.failures;
        if (on_failure) on_failure(*slot.failure);
      }
    }
  }
  stats.provider_texts = texts_sent.load();
  return stats;
}

struct CorpusEmbedding {
  std::map<std::string, EmbeddingVector> vectors;
  std::vector<EmbedFailure> failures;
  EmbedStats stats;
};

// Embeds posting descriptions, keyed by posting id.
inline CorpusEmbedding embed_corpus(std::span<const ingest::CleanPosting> postings, EmbeddingProvider& provider,
                                    const EmbedOptions& options = {}, VectorCache* cache = nullptr) {
  std::vector<EmbedItem> items;
  items.reserve(postings.size());
  for (const auto& p : postings) items.push_back({p.posting_id, p.description});
  CorpusEmbedding out;
  out.stats = embed_items(
      items, provider, cache, options,
      [&](const std::string& id, const EmbeddingVector& v) { out.vectors.insert_or_assign(id, v); },
      [&](const EmbedFailure& f) { out.failures.push_back(f); });
  return out;
}

}  // namespace occmap::embedding
