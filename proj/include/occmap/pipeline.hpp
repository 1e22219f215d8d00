#pragma once

// Batch pipeline behind the command line tool. Each stage reads the previous
// stage's files under the output directory and writes its own:
//
//   corpus/   corpus.jsonl, stats.json, failures.jsonl         (ingest)
//   cache/    vectors.occv                                     (embed)
//   embed/    report.json                                      (embed)
//   match/    summary.json, <driver>.matches.jsonl,
//             <driver>.groups.json, <driver>.top.csv,
//             <driver>.histogram.csv [, <driver>.flagged.jsonl] (match)
//   populate/ review.proposed.tsv                              (populate)
//   ontology/ graph.json                                       (populate --review)
//   report/   report.txt, histograms.csv                       (report)

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "occmap/config.hpp"
#include "occmap/consolidate.hpp"
#include "occmap/embedding.hpp"
#include "occmap/ingest.hpp"
#include "occmap/matcher.hpp"
#include "occmap/ontology.hpp"
#include "occmap/remote_provider.hpp"
#include "occmap/text.hpp"
#include "occmap/vector_cache.hpp"

namespace occmap::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

enum class PipelineErrc { Config, Busy, Data, Provider };

inline const char* to_string(PipelineErrc c) {
  switch (c) {
    case PipelineErrc::Config: return "Config";
    case PipelineErrc::Busy: return "Busy";
    case PipelineErrc::Data: return "Data";
    case PipelineErrc::Provider: return "Provider";
  }
  return "?";
}

using PipelineError = CodedError<PipelineErrc>;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitProvider = 3 };

// Maps any exception escaping a stage to the tool's exit code.
inline int exit_code_for(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const PipelineError& e) {
    switch (e.code()) {
      case PipelineErrc::Config:
      case PipelineErrc::Busy: return kExitUsage;
      case PipelineErrc::Data: return kExitData;
      case PipelineErrc::Provider: return kExitProvider;
    }
  } catch (const ConfigError&) {
    return kExitUsage;
  } catch (const embedding::EmbeddingError& e) {
    switch (e.code()) {
      case embedding::EmbeddingErrc::ProviderUnavailable:
      case embedding::EmbeddingErrc::BudgetTokenizerMismatch:
      case embedding::EmbeddingErrc::InvalidVector: return kExitProvider;
      default: return kExitData;
    }
  } catch (const matcher::MatchError& e) {
    return e.code() == matcher::MatchErrc::ProviderMismatch || e.code() == matcher::MatchErrc::DimensionMismatch
               ? kExitUsage
               : kExitData;
  } catch (const consolidate::ConsolidateError& e) {
    return e.code() == consolidate::ConsolidateErrc::UnresolvablePosting ? kExitData : kExitUsage;
  } catch (...) {
    return kExitData;
  }
  return kExitData;
}

// ---------------------------------------------------------------------------
// Configuration

struct ProviderSettings {
  std::string name = "local";  // local | remote
  std::string endpoint;
  std::string model;
  std::size_t dimension = embedding::kDefaultLocalDimension;
  std::string auth = "bearer";  // bearer | api-key
  std::size_t batch_size = 16;
};

struct RunConfig {
  std::vector<std::string> corpus;
  std::optional<std::string> field_map;
  std::optional<std::string> drivers_dir;
  ProviderSettings provider;
  std::size_t max_tokens = 8192;
  std::size_t parallelism = 1;
  double threshold = matcher::kDefaultThreshold;
  std::size_t top_k = 10;
  std::string out_dir = "out";
  std::optional<std::string> rules;
  std::map<std::string, double> driver_thresholds;  // by driver name
  ingest::CorpusOptions filters;
  bool flag_title_vocabulary = false;
  double max_failure_fraction = 0.05;
  double histogram_bin_width = 0.01;
  std::optional<std::string> organisation;
};

inline void validate(const RunConfig& c) {
  auto bad = [](const std::string& why) { throw ConfigError(ConfigErrc::BadValue, why); };
  auto check_threshold = [&](double t, const std::string& what) {
    if (!(t > -1.0 && t <= 1.0)) bad(what + " must be in (-1, 1], got " + text::format_fixed(t, 4));
  };
  check_threshold(c.threshold, "threshold");
  for (const auto& [name, t] : c.driver_thresholds) check_threshold(t, "driver_threshold." + name);
  if (c.top_k < 1) bad("top_k must be at least 1");
  if (c.max_tokens < 1) bad("max_tokens must be at least 1");
  if (c.parallelism < 1) bad("parallelism must be at least 1");
  if (c.provider.dimension < 1) bad("dimension must be at least 1");
  if (c.provider.batch_size < 1) bad("batch_size must be at least 1");
  if (c.provider.name != "local" && c.provider.name != "remote") bad("provider must be 'local' or 'remote'");
  if (c.provider.name == "remote" && (c.provider.endpoint.empty() || c.provider.model.empty())) {
    bad("remote provider needs endpoint and model");
  }
  if (c.provider.auth != "bearer" && c.provider.auth != "api-key") bad("auth must be 'bearer' or 'api-key'");
  if (!(c.max_failure_fraction >= 0.0 && c.max_failure_fraction <= 1.0)) bad("max_failure_fraction must be in [0, 1]");
  if (!(c.histogram_bin_width > 0.0 && c.histogram_bin_width <= 1.0)) bad("histogram_bin_width must be in (0, 1]");
  for (const auto* d : {&c.filters.date_from, &c.filters.date_to}) {
    if (*d && !ingest::detail::parse_calendar_date(**d)) bad("filter dates must be YYYY-MM-DD, got " + **d);
  }
}

// Reads a flat key=value file. Relative paths are resolved against the
// directory holding the config file.
inline RunConfig parse_run_config(const std::vector<KeyValueEntry>& entries, const fs::path& base_dir) {
  RunConfig c;
  auto path_of = [&](const std::string& v) { return (base_dir / fs::path(v)).lexically_normal().string(); };
  auto size_of = [](const KeyValueEntry& e) {
    const long long v = parse_int_value(e);
    if (v < 0) throw ConfigError(ConfigErrc::BadValue, "line " + std::to_string(e.line) + ": '" + e.key + "' must not be negative");
    return static_cast<std::size_t>(v);
  };
  for (const auto& e : entries) {
    const std::string& k = e.key;
    if (k == "corpus") {
      c.corpus.clear();
      for (const auto& part : text::split(e.value, ',')) {
        const auto p = text::trim(part);
        if (!p.empty()) c.corpus.push_back(path_of(std::string(p)));
      }
    } else if (k == "field_map") {
      c.field_map = path_of(e.value);
    } else if (k == "drivers_dir") {
      c.drivers_dir = path_of(e.value);
    } else if (k == "provider") {
      c.provider.name = e.value;
    } else if (k == "endpoint") {
      c.provider.endpoint = e.value;
    } else if (k == "model") {
      c.provider.model = e.value;
    } else if (k == "dimension") {
      c.provider.dimension = size_of(e);
    } else if (k == "auth") {
      c.provider.auth = e.value;
    } else if (k == "batch_size") {
      c.provider.batch_size = size_of(e);
    } else if (k == "max_tokens") {
      c.max_tokens = size_of(e);
    } else if (k == "parallelism") {
      c.parallelism = size_of(e);
    } else if (k == "threshold") {
      c.threshold = parse_double_value(e);
    } else if (k == "top_k") {
      c.top_k = size_of(e);
    } else if (k == "out_dir") {
      c.out_dir = path_of(e.value);
    } else if (k == "rules") {
      c.rules = path_of(e.value);
    } else if (k.rfind("driver_threshold.", 0) == 0) {
      c.driver_thresholds[k.substr(std::strlen("driver_threshold."))] = parse_double_value(e);
    } else if (k == "filter.location_contains") {
      c.filters.location_contains = e.value;
    } else if (k == "filter.date_from") {
      c.filters.date_from = e.value;
    } else if (k == "filter.date_to") {
      c.filters.date_to = e.value;
    } else if (k == "flag_title_vocabulary") {
      c.flag_title_vocabulary = parse_bool_value(e);
    } else if (k == "max_failure_fraction") {
      c.max_failure_fraction = parse_double_value(e);
    } else if (k == "histogram_bin_width") {
      c.histogram_bin_width = parse_double_value(e);
    } else if (k == "organisation") {
      c.organisation = e.value;
    } else {
      throw ConfigError(ConfigErrc::UnknownKey, "line " + std::to_string(e.line) + ": unknown config key '" + k + "'");
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const auto entries = load_key_values(path);
  return parse_run_config(entries, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PipelineError(PipelineErrc::Data, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::is_regular_file(p)) throw PipelineError(PipelineErrc::Data, "missing " + p.string() + " (" + hint + ")");
}

// Writes next to the target and renames over it, so readers never see a
// partial file.
class AtomicFile {
 public:
  explicit AtomicFile(fs::path target) : target_(std::move(target)) {
    fs::create_directories(target_.parent_path());
    tmp_ = target_;
    tmp_ += ".tmp." + std::to_string(::getpid());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw PipelineError(PipelineErrc::Data, "cannot write " + tmp_.string());
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw PipelineError(PipelineErrc::Data, "write failed for " + tmp_.string());
    out_.close();
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

inline void write_file_atomic(const fs::path& p, const std::string& content) {
  AtomicFile f(p);
  f.stream() << content;
  f.commit();
}

// One invocation per output directory at a time.
class RunLock {
 public:
  explicit RunLock(const fs::path& out_dir) : path_(out_dir / ".occmap.lock") {
    fs::create_directories(out_dir);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw PipelineError(PipelineErrc::Busy, "output directory is locked by another run: " + path_.string() +
                                                    " (delete it if no run is active)");
      }
      throw PipelineError(PipelineErrc::Data, "cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // The pid is informational only.
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos && (s.empty() || (s.front() != ' ' && s.back() != ' '))) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PipelineError(PipelineErrc::Data, "cannot read " + p.string());
  ingest::CsvRecordReader reader(in);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  std::size_t line = 0;
  std::string error;
  while (reader.next(fields, line, error)) {
    if (!error.empty()) throw PipelineError(PipelineErrc::Data, p.string() + ":" + std::to_string(line) + ": " + error);
    rows.push_back(fields);
  }
  return rows;
}

inline std::string score_text(double s) { return text::format_fixed(s, matcher::kScoreDecimals); }

// ---------------------------------------------------------------------------
// Layout

struct Layout {
  fs::path root;
  fs::path corpus() const { return root / "corpus" / "corpus.jsonl"; }
  fs::path corpus_stats() const { return root / "corpus" / "stats.json"; }
  fs::path corpus_failures() const { return root / "corpus" / "failures.jsonl"; }
  fs::path cache() const { return root / "cache" / "vectors.occv"; }
  fs::path embed_report() const { return root / "embed" / "report.json"; }
  fs::path match_dir() const { return root / "match"; }
  fs::path match_summary() const { return match_dir() / "summary.json"; }
  fs::path matches(const std::string& d) const { return match_dir() / (d + ".matches.jsonl"); }
  fs::path groups(const std::string& d) const { return match_dir() / (d + ".groups.json"); }
  fs::path top(const std::string& d) const { return match_dir() / (d + ".top.csv"); }
  fs::path histogram(const std::string& d) const { return match_dir() / (d + ".histogram.csv"); }
  fs::path flagged(const std::string& d) const { return match_dir() / (d + ".flagged.jsonl"); }
  fs::path review_proposed() const { return root / "populate" / "review.proposed.tsv"; }
  fs::path graph() const { return root / "ontology" / "graph.json"; }
  fs::path report_text() const { return root / "report" / "report.txt"; }
  fs::path report_histograms() const { return root / "report" / "histograms.csv"; }
};

// ---------------------------------------------------------------------------
// Drivers

struct DriverDefinition {
  std::string name;
  std::string id;  // slug of the name
  std::string text;
};

// One file per driver in `dir`; the file name (without .txt) is the driver
// name. Lines starting with '#' are comments.
inline std::vector<DriverDefinition> load_drivers(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw PipelineError(PipelineErrc::Data, "drivers directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DriverDefinition> out;
  std::map<std::string, std::string> ids;
  for (const auto& f : files) {
    std::istringstream in(read_file(f));
    std::string line, body;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!text::trim(line).empty() && text::trim(line).front() == '#') continue;
      body += line;
      body += '\n';
    }
    DriverDefinition d{text::collapse_whitespace(f.stem().string()), "", std::string(text::trim(body))};
    d.id = text::slugify(d.name);
    if (auto [it, fresh] = ids.emplace(d.id, d.name); !fresh) {
      throw PipelineError(PipelineErrc::Data, "drivers '" + it->second + "' and '" + d.name + "' share id " + d.id);
    }
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

inline std::string driver_item_id(const DriverDefinition& d) { return "driver:" + d.id; }

// ---------------------------------------------------------------------------
// Providers

inline std::unique_ptr<embedding::EmbeddingProvider> make_provider(const RunConfig& c) {
  if (c.provider.name == "local") {
    return std::make_unique<embedding::LocalHashProvider>(c.provider.dimension, c.max_tokens);
  }
  embedding::RemoteConfig rc;
  rc.endpoint = c.provider.endpoint;
  rc.model = c.provider.model;
  rc.dimension = c.provider.dimension;
  rc.max_input_tokens = c.max_tokens;
  rc.max_batch_size = c.provider.batch_size;
  rc.auth = c.provider.auth == "api-key" ? embedding::AuthStyle::ApiKeyHeader : embedding::AuthStyle::Bearer;
  return std::make_unique<embedding::RemoteProvider>(rc);
}

struct Context {
  RunConfig config;
  Layout layout;
  std::ostream* log = &std::cerr;
  // Lets tests substitute a provider; otherwise built from config.
  embedding::EmbeddingProvider* provider_override = nullptr;

  explicit Context(RunConfig c) : config(std::move(c)), layout{fs::path(config.out_dir)} {}

  embedding::EmbeddingProvider& provider() {
    if (provider_override) return *provider_override;
    if (!owned_provider_) owned_provider_ = make_provider(config);
    return *owned_provider_;
  }

  embedding::EmbedOptions embed_options() {
    embedding::EmbedOptions o;
    o.budget.max_tokens = config.max_tokens;
    o.parallelism = config.parallelism;
    o.log = [this](const std::string& s) { *log << "occmap: " << s << '\n'; };
    return o;
  }

 private:
  std::unique_ptr<embedding::EmbeddingProvider> owned_provider_;
};

// ---------------------------------------------------------------------------
// ingest

struct IngestSummary {
  ingest::CorpusStats stats;
  std::size_t written = 0;
};

inline IngestSummary cmd_ingest(Context& ctx) {
  const auto& c = ctx.config;
  if (c.corpus.empty()) throw ConfigError(ConfigErrc::BadValue, "no corpus input configured (key 'corpus')");
  for (const auto& p : c.corpus) {
    if (!fs::is_regular_file(p)) throw PipelineError(PipelineErrc::Data, "corpus input not found: " + p);
    ingest::infer_format(p);
  }
  const ingest::FieldMapping mapping = c.field_map ? ingest::load_field_mapping(*c.field_map) : ingest::FieldMapping{};

  RunLock lock(ctx.layout.root);
  ingest::CorpusBuilder builder(c.filters);
  AtomicFile corpus(ctx.layout.corpus());
  AtomicFile failures(ctx.layout.corpus_failures());
  IngestSummary summary;
  for (const auto& p : c.corpus) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw PipelineError(PipelineErrc::Data, "cannot read corpus input " + p);
    const std::string source = fs::path(p).filename().string();
    ingest::for_each_posting(
        in, ingest::infer_format(p), mapping,
        [&](ingest::RawPostingRecord&& r) {
          if (auto posting = builder.add(r)) {
            ingest::write_corpus_line(corpus.stream(), *posting);
            ++summary.written;
          }
        },
        [&](ingest::ParseFailure&& f) {
          builder.add_failure(f);
          ordered_json j;
          j["source"] = source;
          j["record_offset"] = f.record_offset;
          j["line"] = f.line;
          j["reason"] = f.reason;
          failures.stream() << j.dump() << '\n';
        });
    if (in.bad()) throw PipelineError(PipelineErrc::Data, "read error on " + p);
  }
  summary.stats = builder.stats();
  corpus.commit();
  failures.commit();
  write_file_atomic(ctx.layout.corpus_stats(), ingest::to_json(summary.stats).dump(2) + "\n");
  const auto& s = summary.stats;
  *ctx.log << "ingest: " << s.raw_count << " raw, " << s.after_dedup_count << " after dedup, "
           << s.after_malformed_drop_count << " kept\n";
  return summary;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedSummary {
  std::size_t postings = 0;
  std::size_t postings_embedded = 0;
  std::size_t drivers = 0;
  std::size_t drivers_embedded = 0;
  std::size_t provider_texts = 0;
  std::size_t cache_hits = 0;
  std::vector<embedding::EmbedFailure> failures;
};

inline bool is_provider_failure(embedding::EmbeddingErrc c) {
  return c == embedding::EmbeddingErrc::ProviderUnavailable || c == embedding::EmbeddingErrc::BudgetTokenizerMismatch ||
         c == embedding::EmbeddingErrc::InvalidVector;
}

inline EmbedSummary cmd_embed(Context& ctx) {
  require_file(ctx.layout.corpus(), "run ingest first");
  const auto drivers = ctx.config.drivers_dir ? load_drivers(*ctx.config.drivers_dir) : std::vector<DriverDefinition>{};
  RunLock lock(ctx.layout.root);
  auto& provider = ctx.provider();
  fs::create_directories(ctx.layout.cache().parent_path());
  embedding::VectorCache cache(ctx.layout.cache().string());
  const auto options = ctx.embed_options();

  EmbedSummary summary;
  auto run = [&](const std::vector<embedding::EmbedItem>& items, std::size_t& embedded) {
    const auto stats = embedding::embed_items(
        items, provider, &cache, options, [&](const std::string&, const embedding::EmbeddingVector&) { ++embedded; },
        [&](const embedding::EmbedFailure& f) { summary.failures.push_back(f); });
    summary.provider_texts += stats.provider_texts;
    summary.cache_hits += stats.cache_hits;
  };

  std::vector<embedding::EmbedItem> driver_items;
  for (const auto& d : drivers) driver_items.push_back({driver_item_id(d), d.text});
  summary.drivers = driver_items.size();
  run(driver_items, summary.drivers_embedded);

  // Postings go through in bounded chunks.
  constexpr std::size_t kChunk = 4096;
  std::vector<embedding::EmbedItem> chunk;
  std::ifstream in(ctx.layout.corpus(), std::ios::binary);
  ingest::read_corpus(in, [&](ingest::CleanPosting&& p) {
    ++summary.postings;
    chunk.push_back({p.posting_id, std::move(p.description)});
    if (chunk.size() == kChunk) {
      run(chunk, summary.postings_embedded);
      chunk.clear();
    }
  });
  run(chunk, summary.postings_embedded);
  cache.flush();

  ordered_json report;
  report["provider_tag"] = provider.tag();
  report["dimension"] = provider.dimension();
  report["max_tokens"] = ctx.config.max_tokens;
  report["drivers"] = summary.drivers;
  report["drivers_embedded"] = summary.drivers_embedded;
  report["postings"] = summary.postings;
  report["postings_embedded"] = summary.postings_embedded;
  report["failures"] = nlohmann::json::array();
  for (const auto& f : summary.failures) {
    ordered_json j;
    j["id"] = f.id;
    j["code"] = embedding::to_string(f.code);
    j["message"] = f.message;
    report["failures"].push_back(j);
  }
  write_file_atomic(ctx.layout.embed_report(), report.dump(2) + "\n");
  *ctx.log << "embed: " << summary.postings_embedded << "/" << summary.postings << " postings, "
           << summary.drivers_embedded << "/" << summary.drivers << " drivers, " << summary.provider_texts
           << " texts sent to " << provider.tag() << ", " << summary.cache_hits << " cache hits\n";

  const std::size_t posting_failures = summary.postings - summary.postings_embedded;
  if (summary.postings > 0 &&
      static_cast<double>(posting_failures) > ctx.config.max_failure_fraction * static_cast<double>(summary.postings)) {
    const bool provider_side = std::any_of(summary.failures.begin(), summary.failures.end(),
                                           [](const auto& f) { return is_provider_failure(f.code); });
    throw PipelineError(provider_side ? PipelineErrc::Provider : PipelineErrc::Data,
                        std::to_string(posting_failures) + " of " + std::to_string(summary.postings) +
                            " postings failed to embed (limit " + text::format_fixed(ctx.config.max_failure_fraction, 4) +
                            "); see " + ctx.layout.embed_report().string());
  }
  return summary;
}

// ---------------------------------------------------------------------------
// match

struct DriverOutcome {
  std::string id;
  std::string name;
  double threshold = 0.0;
  std::size_t matches = 0;
  std::size_t groups = 0;
  std::optional<std::string> error;
};

struct MatchSummary {
  std::string run_id;
  std::size_t postings_indexed = 0;
  std::vector<DriverOutcome> drivers;
};

inline consolidate::ConsolidationRules rules_for(const RunConfig& c) {
  return c.rules ? consolidate::load_rules(*c.rules) : consolidate::ConsolidationRules{};
}

// Stable identifier of the inputs that determine match output.
inline std::string compute_run_id(const Context& ctx, const std::string& provider_tag,
                                  const std::vector<DriverDefinition>& drivers) {
  std::string basis = text::to_hex(text::fnv1a64(read_file(ctx.layout.corpus())));
  basis += '\x1f' + provider_tag;
  basis += '\x1f' + std::to_string(ctx.config.max_tokens);
  basis += '\x1f' + score_text(ctx.config.threshold);
  for (const auto& [name, t] : ctx.config.driver_thresholds) basis += '\x1f' + name + '=' + score_text(t);
  for (const auto& d : drivers) basis += '\x1f' + d.name + '\x1e' + d.text;
  if (ctx.config.rules) basis += '\x1f' + read_file(*ctx.config.rules);
  return text::to_hex(text::fnv1a64(basis)).substr(0, 8);
}

inline ordered_json group_json(const consolidate::OccupationGroup& g) {
  ordered_json j;
  j["canonical_title"] = g.canonical_title;
  j["distinct_count"] = g.distinct_count;
  j["best_score"] = g.best_score;
  j["member_posting_ids"] = g.member_posting_ids;
  j["member_titles"] = g.member_titles;
  return j;
}

inline MatchSummary cmd_match(Context& ctx) {
  const auto& c = ctx.config;
  validate(c);
  const auto drivers = c.drivers_dir ? load_drivers(*c.drivers_dir) : std::vector<DriverDefinition>{};
  MatchSummary summary;
  if (drivers.empty()) {
    *ctx.log << "match: no drivers configured, nothing to do\n";
    return summary;
  }
  for (const auto& [name, t] : c.driver_thresholds) {
    if (std::none_of(drivers.begin(), drivers.end(), [&](const auto& d) { return d.name == name; })) {
      throw ConfigError(ConfigErrc::BadValue, "driver_threshold for unknown driver '" + name + "'");
    }
  }
  require_file(ctx.layout.corpus(), "run ingest first");
  require_file(ctx.layout.cache(), "run embed first");
  const auto rules = rules_for(c);
  RunLock lock(ctx.layout.root);
  auto& provider = ctx.provider();
  if (fs::is_regular_file(ctx.layout.embed_report())) {
    const auto tag = nlohmann::json::parse(read_file(ctx.layout.embed_report())).value("provider_tag", "");
    if (tag != provider.tag()) {
      throw PipelineError(PipelineErrc::Config, "vectors were embedded with " + tag + " but the configuration selects " +
                                                    provider.tag() + "; rerun embed or fix the provider settings");
    }
  }
  embedding::VectorCache cache(ctx.layout.cache().string());
  const auto budget = ctx.embed_options().budget;

  auto cached_vector = [&](const std::string& s) -> std::optional<embedding::EmbeddingVector> {
    try {
      return cache.get(embedding::cache_key(embedding::prepare_input(s, provider, budget)), provider.tag());
    } catch (const embedding::EmbeddingError&) {
      return std::nullopt;
    }
  };

  matcher::VectorIndex index;
  consolidate::PostingDirectory directory;
  std::size_t missing = 0;
  {
    std::ifstream in(ctx.layout.corpus(), std::ios::binary);
    ingest::read_corpus(in, [&](ingest::CleanPosting&& p) {
      auto v = cached_vector(p.description);
      if (!v) {
        ++missing;
        return;
      }
      index.add(p.posting_id, p.title, *v);
      directory.emplace(p.posting_id, consolidate::PostingRef{p.title, p.company});
    });
  }
  if (index.empty() && missing > 0) {
    throw PipelineError(PipelineErrc::Data, "no posting vectors for provider " + provider.tag() + "; run embed first");
  }
  summary.postings_indexed = index.size();
  summary.run_id = compute_run_id(ctx, provider.tag(), drivers);

  std::vector<matcher::DriverQuery> queries;
  matcher::MatchOptions options;
  options.threshold = c.threshold;
  options.parallelism = c.parallelism;
  std::map<std::string, std::string> query_errors;
  for (const auto& d : drivers) {
    if (auto it = c.driver_thresholds.find(d.name); it != c.driver_thresholds.end()) options.driver_thresholds[d.id] = it->second;
    if (auto v = cached_vector(d.text)) {
      queries.push_back({d.id, std::move(*v)});
    } else {
      query_errors[d.id] = d.text.empty() ? "empty definition text" : "no cached query vector; run embed first";
    }
  }
  const auto results = matcher::match_all_drivers(queries, index, options);

  fs::create_directories(ctx.layout.match_dir());
  for (const auto& d : drivers) {
    DriverOutcome outcome{d.id, d.name, matcher::threshold_for(options, d.id), 0, 0, std::nullopt};
    if (auto e = query_errors.find(d.id); e != query_errors.end()) {
      outcome.error = e->second;
    } else if (auto f = results.failures.find(d.id); f != results.failures.end()) {
      outcome.error = f->second;
    }
    if (outcome.error) {
      *ctx.log << "match: " << d.name << ": " << *outcome.error << '\n';
      summary.drivers.push_back(outcome);
      continue;
    }
    const auto& ms = results.results.at(d.id);
    const auto groups = consolidate::consolidate(ms, directory, rules);
    outcome.matches = ms.size();
    outcome.groups = groups.size();

    std::string lines;
    for (const auto& m : ms) lines += matcher::match_to_json_line(m) + "\n";
    write_file_atomic(ctx.layout.matches(d.id), lines);

    ordered_json gj = ordered_json::array();
    for (const auto& g : groups) gj.push_back(group_json(g));
    write_file_atomic(ctx.layout.groups(d.id), gj.dump(2) + "\n");

    std::string top = "rank,canonical_title,distinct_count,best_score\n";
    const auto best = consolidate::top_n(groups, c.top_k);
    for (std::size_t i = 0; i < best.size(); ++i) {
      top += std::to_string(i + 1) + "," + csv_field(best[i].canonical_title) + "," +
             std::to_string(best[i].distinct_count) + "," + score_text(best[i].best_score) + "\n";
    }
    write_file_atomic(ctx.layout.top(d.id), top);

    const auto h = consolidate::frequency_distribution(ms, c.histogram_bin_width);
    std::string hist = "bin,count\n";
    for (const auto& [k, n] : h.bins) hist += consolidate::bin_label(k, h.width) + "," + std::to_string(n) + "\n";
    write_file_atomic(ctx.layout.histogram(d.id), hist);

    if (c.flag_title_vocabulary) {
      std::string flagged;
      for (const auto& m : matcher::flag_off_vocabulary(ms, d.text)) flagged += matcher::match_to_json_line(m) + "\n";
      write_file_atomic(ctx.layout.flagged(d.id), flagged);
    }
    summary.drivers.push_back(outcome);
  }

  ordered_json sj;
  sj["run_id"] = summary.run_id;
  sj["provider_tag"] = provider.tag();
  sj["threshold"] = c.threshold;
  sj["top_k"] = c.top_k;
  sj["postings_indexed"] = summary.postings_indexed;
  sj["postings_without_vector"] = missing;
  sj["drivers"] = nlohmann::json::array();
  for (const auto& o : summary.drivers) {
    ordered_json j;
    j["driver_id"] = o.id;
    j["name"] = o.name;
    j["threshold"] = o.threshold;
    j["matches"] = o.matches;
    j["groups"] = o.groups;
    j["status"] = o.error ? "failed" : "ok";
    if (o.error) j["error"] = *o.error;
    sj["drivers"].push_back(j);
  }
  write_file_atomic(ctx.layout.match_summary(), sj.dump(2) + "\n");
  *ctx.log << "match: " << summary.drivers.size() << " drivers against " << summary.postings_indexed
           << " postings (run " << summary.run_id << ")\n";
  return summary;
}

// ---------------------------------------------------------------------------
// populate

struct ReviewRow {
  std::string status;  // proposed | accepted | rejected
  std::string driver;  // driver id
  std::string segment;
  std::string canonical_title;
  std::string note;
  int line = 0;
};

inline constexpr const char* kReviewHeader = "status\tdriver\tsegment\tcanonical_title\tnote";

inline std::vector<ReviewRow> parse_review(std::istream& in, const std::string& source) {
  std::vector<ReviewRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line[0] == '#') continue;
    if (line == kReviewHeader) continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() < 4) {
      throw PipelineError(PipelineErrc::Data, source + ":" + std::to_string(line_no) + ": expected 5 tab-separated columns");
    }
    ReviewRow r{text::to_lower_ascii(text::trim(cols[0])), std::string(text::trim(cols[1])), cols[2], cols[3], "", line_no};
    for (std::size_t i = 4; i < cols.size(); ++i) r.note += (i > 4 ? "\t" : "") + cols[i];
    if (r.status != "proposed" && r.status != "accepted" && r.status != "rejected") {
      throw PipelineError(PipelineErrc::Data, source + ":" + std::to_string(line_no) + ": unknown status '" + r.status + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

struct MatchRun {
  nlohmann::json summary;
  std::string run_id;
};

inline MatchRun load_match_run(const Layout& layout) {
  require_file(layout.match_summary(), "run match first");
  MatchRun m;
  m.summary = nlohmann::json::parse(read_file(layout.match_summary()));
  m.run_id = m.summary.at("run_id").get<std::string>();
  return m;
}

inline std::string segment_name(const std::string& driver_name, const std::string& run_id) {
  return driver_name + " matched cohort " + run_id;
}

struct PopulateSummary {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  bool committed = false;
  std::vector<ontology::Violation> violations;
};

inline PopulateSummary cmd_populate(Context& ctx, const std::optional<std::string>& review_path) {
  const auto run = load_match_run(ctx.layout);
  const auto drivers = ctx.config.drivers_dir ? load_drivers(*ctx.config.drivers_dir) : std::vector<DriverDefinition>{};
  std::map<std::string, const DriverDefinition*> by_id;
  for (const auto& d : drivers) by_id[d.id] = &d;

  // Groups per ok driver, in summary order.
  std::vector<std::pair<std::string, nlohmann::json>> groups;
  for (const auto& d : run.summary.at("drivers")) {
    if (d.at("status") != "ok") continue;
    const auto id = d.at("driver_id").get<std::string>();
    groups.emplace_back(id, nlohmann::json::parse(read_file(ctx.layout.groups(id))));
  }
  RunLock lock(ctx.layout.root);
  PopulateSummary summary;

  if (!review_path) {
    std::string out = std::string(kReviewHeader) + "\n";
    for (const auto& [id, gs] : groups) {
      const auto name = by_id.count(id) ? by_id.at(id)->name : id;
      for (std::size_t i = 0; i < gs.size() && i < ctx.config.top_k; ++i) {
        out += "proposed\t" + id + "\t" + segment_name(name, run.run_id) + "\t" +
               gs[i].at("canonical_title").get<std::string>() + "\t\n";
        ++summary.proposed;
      }
    }
    write_file_atomic(ctx.layout.review_proposed(), out);
    *ctx.log << "populate: wrote " << summary.proposed << " proposed links to " << ctx.layout.review_proposed().string()
             << "; mark rows accepted or rejected and rerun with --review\n";
    return summary;
  }

  std::ifstream in(*review_path);
  if (!in) throw PipelineError(PipelineErrc::Data, "cannot read review file " + *review_path);
  const auto rows = parse_review(in, *review_path);

  std::map<std::string, const nlohmann::json*> groups_by_driver;
  for (const auto& [id, gs] : groups) groups_by_driver[id] = &gs;

  // Validate every row before touching the graph.
  std::map<std::string, std::vector<const nlohmann::json*>> accepted;  // driver -> groups
  std::set<std::string> reviewed;
  for (const auto& r : rows) {
    const std::string where = *review_path + ":" + std::to_string(r.line) + ": ";
    if (!by_id.count(r.driver)) throw PipelineError(PipelineErrc::Data, where + "unknown driver '" + r.driver + "'");
    const auto g = groups_by_driver.find(r.driver);
    if (g == groups_by_driver.end()) {
      throw PipelineError(PipelineErrc::Data, where + "driver '" + r.driver + "' has no match results");
    }
    const nlohmann::json* found = nullptr;
    for (const auto& grp : *g->second) {
      if (grp.at("canonical_title").get<std::string>() == r.canonical_title) found = &grp;
    }
    if (!found) {
      throw PipelineError(PipelineErrc::Data,
                          where + "title '" + r.canonical_title + "' is not among the matches for " + r.driver);
    }
    reviewed.insert(r.driver);
    if (r.status == "accepted") {
      auto& list = accepted[r.driver];
      if (std::find(list.begin(), list.end(), found) == list.end()) list.push_back(found);
    }
  }

  ontology::OntologyGraph graph;
  std::optional<ontology::EntityId> workforce;
  if (ctx.config.organisation) {
    auto w = ontology::make_workforce(text::slugify(*ctx.config.organisation), *ctx.config.organisation);
    workforce = w.id;
    graph.add_entity(w);
  }
  // Titles may be accepted for several drivers; merge their aliases first.
  std::map<std::string, std::set<std::string>> title_aliases;
  for (const auto& [driver, gs] : accepted) {
    for (const auto* g : gs) {
      auto& aliases = title_aliases[g->at("canonical_title").get<std::string>()];
      for (const auto& t : g->at("member_titles")) aliases.insert(t.get<std::string>());
    }
  }
  std::map<std::string, ontology::EntityId> title_ids;
  for (const auto& [canonical, aliases] : title_aliases) {
    auto t = ontology::make_title(ontology::make_local_id(graph, ontology::EntityKind::IndustryTitle, canonical),
                                  canonical, aliases);
    title_ids.emplace(canonical, t.id);
    graph.add_entity(t);
  }
  for (const auto& id : reviewed) {
    const auto& d = *by_id.at(id);
    std::map<std::string, ontology::Provenance> provenance = {{"definition_text", ontology::Provenance::Manual}};
    const auto acc = accepted.find(id);
    if (acc != accepted.end()) provenance["segment"] = ontology::Provenance::Matched;
    auto driver = ontology::make_driver(d.id, d.name, ontology::DriverKind::Transformation, d.text, provenance);
    graph.add_entity(driver);
    if (acc == accepted.end()) continue;
    auto segment = ontology::make_segment(d.id + "-cohort-" + run.run_id, segment_name(d.name, run.run_id),
                                          {{"driver", d.id}, {"run_id", run.run_id}});
    graph.add_entity(segment);
    graph.add_edge(driver.id, ontology::Relation::Drives, segment.id);
    if (workforce) graph.add_edge(*workforce, ontology::Relation::HasSegment, segment.id);
    for (const auto* g : acc->second) {
      graph.add_edge(segment.id, ontology::Relation::MapsTo, title_ids.at(g->at("canonical_title").get<std::string>()));
      ++summary.accepted;
    }
  }
  summary.violations = ontology::validate_graph(graph);
  if (!summary.violations.empty()) {
    std::string why;
    for (const auto& v : summary.violations) why += "\n  " + std::string(ontology::to_string(v.rule)) + " " + v.subject;
    throw PipelineError(PipelineErrc::Data, "graph validation failed, nothing written:" + why);
  }
  write_file_atomic(ctx.layout.graph(), ontology::serialize(graph));
  summary.committed = true;
  *ctx.log << "populate: committed " << summary.accepted << " accepted links for " << reviewed.size()
           << " drivers to " << ctx.layout.graph().string() << '\n';
  return summary;
}

// ---------------------------------------------------------------------------
// report

inline std::string pad_right(const std::string& s, std::size_t width) {
  // Width counts code points so accented titles line up.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return cps >= width ? s : s + std::string(width - cps, ' ');
}

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline void cmd_report(Context& ctx) {
  const auto run = load_match_run(ctx.layout);
  std::ostringstream out;
  std::string histograms = "driver_id,bin,count\n";
  out << "Occupation groups matched to transformation initiatives\n";
  out << "run " << run.run_id << ", provider " << run.summary.at("provider_tag").get<std::string>() << ", "
      << run.summary.at("postings_indexed").get<std::size_t>() << " postings indexed\n";
  for (const auto& d : run.summary.at("drivers")) {
    const auto id = d.at("driver_id").get<std::string>();
    const auto name = d.at("name").get<std::string>();
    out << "\n== " << name << " ==\n";
    if (d.at("status") != "ok") {
      out << "not matched: " << d.at("error").get<std::string>() << "\n";
      continue;
    }
    out << "threshold " << score_text(d.at("threshold").get<double>()) << ", " << d.at("matches").get<std::size_t>()
        << " matching postings, " << d.at("groups").get<std::size_t>() << " occupation groups\n";
    require_file(ctx.layout.top(id), "run match first");
    require_file(ctx.layout.histogram(id), "run match first");
    const auto top = read_csv(ctx.layout.top(id));
    if (top.size() <= 1) {
      out << "no results\n";
    } else {
      std::size_t width = 10;
      for (std::size_t i = 1; i < top.size(); ++i) width = std::max(width, pad_right(top[i].at(1), 0).size());
      width = std::min<std::size_t>(width, 60);
      out << pad_left("rank", 4) << "  " << pad_right("occupation", width) << "  " << pad_left("postings", 8) << "  "
          << "best score\n";
      for (std::size_t i = 1; i < top.size(); ++i) {
        const auto& r = top[i];
        if (r.size() != 4) throw PipelineError(PipelineErrc::Data, "malformed row in " + ctx.layout.top(id).string());
        out << pad_left(r[0], 4) << "  " << pad_right(r[1], width) << "  " << pad_left(r[2], 8) << "  " << r[3] << "\n";
      }
    }
    const auto hist = read_csv(ctx.layout.histogram(id));
    for (std::size_t i = 1; i < hist.size(); ++i) histograms += id + "," + hist[i].at(0) + "," + hist[i].at(1) + "\n";
  }
  RunLock lock(ctx.layout.root);
  write_file_atomic(ctx.layout.report_text(), out.str());
  write_file_atomic(ctx.layout.report_histograms(), histograms);
  *ctx.log << "report: wrote " << ctx.layout.report_text().string() << '\n';
}

}  // namespace occmap::pipeline
