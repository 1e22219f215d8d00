#pragma once

// Job-posting ingestion: streaming JSON-lines / RFC-4180 CSV parsing, text
// cleaning, content-keyed deduplication and corpus assembly.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "occmap/config.hpp"
#include "occmap/error.hpp"
#include "occmap/text.hpp"

namespace occmap::ingest {

enum class IngestErrc { Io, UnknownFormat, BadCorpus };

using IngestError = CodedError<IngestErrc>;

struct RawPostingRecord {
  std::string source_id;
  std::string title;
  std::string description;
  std::optional<std::string> company;
  std::optional<std::string> location;
  std::optional<std::string> posted_date;  // YYYY-MM-DD
  std::optional<std::string> url;
  std::optional<std::string> source_portal;

  friend bool operator==(const RawPostingRecord&, const RawPostingRecord&) = default;
};

struct ParseFailure {
  std::size_t record_offset = 0;  // 0-based index among records in the stream
  std::size_t line = 0;           // 1-based line where the record starts
  std::string reason;             // e.g. "missing-field:description", "malformed-json"
};

struct CleanPosting {
  std::string posting_id;
  std::string title;
  std::string description;
  std::optional<std::string> company;
  std::optional<std::string> location;
  std::optional<std::string> posted_date;
  std::optional<std::string> url;

  friend bool operator==(const CleanPosting&, const CleanPosting&) = default;
};

struct CorpusStats {
  std::uint64_t raw_count = 0;
  std::uint64_t after_dedup_count = 0;
  std::uint64_t after_malformed_drop_count = 0;
  std::map<std::string, std::uint64_t> drop_reasons;
};

enum class InputFormat { JsonLines, Csv };

inline InputFormat infer_format(const std::filesystem::path& path) {
  const auto ext = text::to_lower_ascii(path.extension().string());
  if (ext == ".jsonl" || ext == ".json" || ext == ".jsonld" || ext == ".ndjson") return InputFormat::JsonLines;
  if (ext == ".csv") return InputFormat::Csv;
  throw IngestError(IngestErrc::UnknownFormat, "cannot infer input format from extension: " + path.string());
}

// ---------------------------------------------------------------------------
// Field mapping

// Source field name for each record field. For JSON-lines input a dotted name
// ("hiringOrganization.name") addresses nested objects. A source_id of
// "@offset" synthesizes ids from the record offset.
struct FieldMapping {
  std::string source_id = "source_id";
  std::string title = "title";
  std::string description = "description";
  std::string company = "company";
  std::string location = "location";
  std::string posted_date = "posted_date";
  std::string url = "url";
  std::string source_portal = "source_portal";
};

inline FieldMapping field_mapping_from(const std::vector<KeyValueEntry>& entries) {
  FieldMapping m;
  for (const auto& e : entries) {
    std::string* slot = nullptr;
    if (e.key == "source_id") slot = &m.source_id;
    else if (e.key == "title") slot = &m.title;
    else if (e.key == "description") slot = &m.description;
    else if (e.key == "company") slot = &m.company;
    else if (e.key == "location") slot = &m.location;
    else if (e.key == "posted_date") slot = &m.posted_date;
    else if (e.key == "url") slot = &m.url;
    else if (e.key == "source_portal") slot = &m.source_portal;
    if (slot == nullptr) {
      throw ConfigError(ConfigErrc::UnknownKey, "field mapping line " + std::to_string(e.line) + ": unknown field '" + e.key + "'");
    }
    if (e.value.empty()) {
      throw ConfigError(ConfigErrc::BadValue, "field mapping line " + std::to_string(e.line) + ": empty source field for '" + e.key + "'");
    }
    *slot = e.value;
  }
  return m;
}

inline FieldMapping load_field_mapping(const std::string& path) { return field_mapping_from(load_key_values(path)); }

// ---------------------------------------------------------------------------
// RFC-4180 record reader

class CsvRecordReader {
 public:
  explicit CsvRecordReader(std::istream& in) : in_(in) {}

  // Reads the next record into `fields`. Returns false at end of input.
  // Structural problems are reported through `error` (empty when clean); the
  // reader resynchronizes at the next line break outside quotes.
  bool next(std::vector<std::string>& fields, std::size_t& start_line, std::string& error) {
    fields.clear();
    error.clear();
    auto* buf = in_.rdbuf();
    using traits = std::char_traits<char>;

    // Skip blank lines between records.
    int c = buf->sgetc();
    while (c == '\n' || c == '\r') {
      buf->sbumpc();
      if (c == '\n') ++line_;
      c = buf->sgetc();
    }
    if (c == traits::eof()) {
      if (in_.bad()) throw IngestError(IngestErrc::Io, "read error on CSV input");
      return false;
    }
    start_line = line_;

    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    bool after_quote = false;
    while (true) {
      c = buf->sbumpc();
      if (c == traits::eof()) {
        if (in_.bad()) throw IngestError(IngestErrc::Io, "read error on CSV input");
        if (in_quotes) error = "malformed-csv:unterminated-quote";
        fields.push_back(std::move(field));
        return true;
      }
      const char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (buf->sgetc() == '"') {
            buf->sbumpc();
            field.push_back('"');
          } else {
            in_quotes = false;
            after_quote = true;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(ch);
        }
        continue;
      }
      if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = after_quote = false;
        continue;
      }
      if (ch == '\r' || ch == '\n') {
        if (ch == '\r' && buf->sgetc() == '\n') buf->sbumpc();
        ++line_;
        fields.push_back(std::move(field));
        return true;
      }
      if (ch == '"' && field.empty() && !was_quoted) {
        in_quotes = was_quoted = true;
        continue;
      }
      if (after_quote && error.empty()) error = "malformed-csv:stray-characters-after-quote";
      field.push_back(ch);
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

// ---------------------------------------------------------------------------
// Streaming posting reader

namespace detail {

inline std::optional<std::string> parse_calendar_date(std::string_view s) {
  if (s.size() < 10) return std::nullopt;
  const auto digits = [&](std::size_t from, std::size_t n, int& out) {
    out = 0;
    for (std::size_t i = from; i < from + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      out = out * 10 + (s[i] - '0');
    }
    return true;
  };
  int y = 0, m = 0, d = 0;
  if (!digits(0, 4, y) || s[4] != '-' || !digits(5, 2, m) || s[7] != '-' || !digits(8, 2, d)) return std::nullopt;
  if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::string(s.substr(0, 10));
}

inline nlohmann::json::json_pointer dotted_pointer(const std::string& dotted) {
  std::string ptr;
  for (const auto& part : text::split(dotted, '.')) {
    ptr.push_back('/');
    for (const char c : part) {
      if (c == '~') ptr += "~0";
      else if (c == '/') ptr += "~1";
      else ptr.push_back(c);
    }
  }
  return nlohmann::json::json_pointer(ptr);
}

enum class FieldState { Missing, Present, Malformed };

}  // namespace detail

class PostingReader {
 public:
  using Item = std::variant<RawPostingRecord, ParseFailure>;

  PostingReader(std::istream& in, InputFormat format, FieldMapping mapping = {})
      : in_(in), format_(format), mapping_(std::move(mapping)), csv_(in) {
    if (!in_.good() && !in_.eof()) throw IngestError(IngestErrc::Io, "input stream is not readable");
    for (const auto* name : {&mapping_.source_id, &mapping_.title, &mapping_.description, &mapping_.company,
                             &mapping_.location, &mapping_.posted_date, &mapping_.url, &mapping_.source_portal}) {
      pointers_.push_back(detail::dotted_pointer(*name));
    }
  }

  // Holds at most one record at a time; returns std::nullopt at end of input.
  std::optional<Item> next() {
    return format_ == InputFormat::Csv ? next_csv() : next_json();
  }

  std::size_t records_seen() const { return offset_; }

 private:
  enum Slot { kSourceId, kTitle, kDescription, kCompany, kLocation, kPostedDate, kUrl, kPortal, kSlots };

  static constexpr std::string_view slot_name(int slot) {
    constexpr std::string_view names[] = {"source_id", "title",       "description", "company",
                                          "location",  "posted_date", "url",         "source_portal"};
    return names[slot];
  }

  const std::string& mapped(int slot) const {
    const std::string* names[] = {&mapping_.source_id, &mapping_.title,       &mapping_.description, &mapping_.company,
                                  &mapping_.location,  &mapping_.posted_date, &mapping_.url,         &mapping_.source_portal};
    return *names[slot];
  }

  template <typename Lookup>
  Item assemble(std::size_t offset, std::size_t line, Lookup&& lookup) {
    RawPostingRecord rec;
    std::optional<std::string> values[kSlots];
    for (int slot = 0; slot < kSlots; ++slot) {
      if (slot == kSourceId && mapping_.source_id == "@offset") {
        values[slot] = "rec-" + std::to_string(offset);
        continue;
      }
      std::string value;
      switch (lookup(slot, value)) {
        case detail::FieldState::Present:
          values[slot] = text::sanitize_utf8(value);
          break;
        case detail::FieldState::Malformed:
          return ParseFailure{offset, line, "malformed-field:" + std::string(slot_name(slot))};
        case detail::FieldState::Missing:
          break;
      }
    }
    for (const int slot : {kSourceId, kTitle, kDescription}) {
      if (!values[slot] || (slot == kSourceId && values[slot]->empty())) {
        return ParseFailure{offset, line, "missing-field:" + std::string(slot_name(slot))};
      }
    }
    rec.source_id = std::move(*values[kSourceId]);
    rec.title = std::move(*values[kTitle]);
    rec.description = std::move(*values[kDescription]);
    const auto optional_text = [](std::optional<std::string>& v) -> std::optional<std::string> {
      if (!v || v->empty()) return std::nullopt;
      return std::move(*v);
    };
    rec.company = optional_text(values[kCompany]);
    rec.location = optional_text(values[kLocation]);
    rec.url = optional_text(values[kUrl]);
    rec.source_portal = optional_text(values[kPortal]);
    if (values[kPostedDate] && !values[kPostedDate]->empty()) {
      rec.posted_date = detail::parse_calendar_date(*values[kPostedDate]);
      if (!rec.posted_date) return ParseFailure{offset, line, "malformed-field:posted_date"};
    }
    return rec;
  }

  std::optional<Item> next_json() {
    std::string line;
    while (true) {
      if (!std::getline(in_, line)) {
        if (in_.bad()) throw IngestError(IngestErrc::Io, "read error on JSON-lines input");
        return std::nullopt;
      }
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!text::trim(line).empty()) break;
    }
    const std::size_t offset = offset_++;
    auto doc = nlohmann::json::parse(text::sanitize_utf8(line), nullptr, false);
    if (doc.is_discarded()) return ParseFailure{offset, line_, "malformed-json"};
    if (!doc.is_object()) return ParseFailure{offset, line_, "malformed-structure:not-an-object"};
    return assemble(offset, line_, [&](int slot, std::string& out) {
      const auto& ptr = pointers_[static_cast<std::size_t>(slot)];
      if (!doc.contains(ptr)) return detail::FieldState::Missing;
      const auto& v = doc.at(ptr);
      if (v.is_null()) return detail::FieldState::Missing;
      if (v.is_string()) {
        out = v.get<std::string>();
        return detail::FieldState::Present;
      }
      if (v.is_number() || v.is_boolean()) {
        out = v.dump();
        return detail::FieldState::Present;
      }
      return detail::FieldState::Malformed;
    });
  }

  std::optional<Item> next_csv() {
    std::vector<std::string> fields;
    std::size_t start_line = 0;
    std::string error;
    if (!header_read_) {
      header_read_ = true;
      if (!csv_.next(fields, start_line, error)) return std::nullopt;
      for (int slot = 0; slot < kSlots; ++slot) {
        columns_[slot] = -1;
        for (std::size_t i = 0; i < fields.size(); ++i) {
          if (text::trim(fields[i]) == mapped(slot)) {
            columns_[slot] = static_cast<int>(i);
            break;
          }
        }
      }
      header_width_ = fields.size();
    }
    if (!csv_.next(fields, start_line, error)) return std::nullopt;
    const std::size_t offset = offset_++;
    if (!error.empty()) return ParseFailure{offset, start_line, error};
    if (fields.size() != header_width_) return ParseFailure{offset, start_line, "malformed-csv:column-count"};
    return assemble(offset, start_line, [&](int slot, std::string& out) {
      const int col = columns_[slot];
      if (col < 0) return detail::FieldState::Missing;
      out = fields[static_cast<std::size_t>(col)];
      return detail::FieldState::Present;
    });
  }

  std::istream& in_;
  InputFormat format_;
  FieldMapping mapping_;
  CsvRecordReader csv_;
  std::vector<nlohmann::json::json_pointer> pointers_;
  bool header_read_ = false;
  std::size_t header_width_ = 0;
  int columns_[kSlots] = {};
  std::size_t offset_ = 0;
  std::size_t line_ = 0;
};

struct ParseResult {
  std::vector<RawPostingRecord> records;
  std::vector<ParseFailure> failures;
};

inline void for_each_posting(std::istream& in, InputFormat format, const FieldMapping& mapping,
                             const std::function<void(RawPostingRecord&&)>& on_record,
                             const std::function<void(ParseFailure&&)>& on_failure) {
  PostingReader reader(in, format, mapping);
  while (auto item = reader.next()) {
    if (auto* rec = std::get_if<RawPostingRecord>(&*item)) {
      on_record(std::move(*rec));
    } else {
      on_failure(std::get<ParseFailure>(std::move(*item)));
    }
  }
}

inline ParseResult parse_posting_stream(std::istream& in, InputFormat format, const FieldMapping& mapping = {}) {
  ParseResult result;
  for_each_posting(
      in, format, mapping, [&](RawPostingRecord&& r) { result.records.push_back(std::move(r)); },
      [&](ParseFailure&& f) { result.failures.push_back(std::move(f)); });
  return result;
}

// ---------------------------------------------------------------------------
// Text normalization

// Letters and digits. Non-ASCII coverage is a fixed table of alphabetic
// blocks so results do not depend on the C locale.
constexpr bool is_word_codepoint(char32_t cp) {
  if (cp < 0x80) return text::is_ascii_alnum(static_cast<char>(cp));
  if (cp == 0xAA || cp == 0xB5 || cp == 0xBA) return true;
  if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
  if (cp >= 0x250 && cp <= 0x2AF) return true;  // IPA extensions
  if (cp >= 0x300 && cp <= 0x36F) return true;  // combining diacritics
  if (cp >= 0x370 && cp <= 0x3FF) return cp != 0x375 && cp != 0x37E && cp != 0x384 && cp != 0x385 && cp != 0x387;
  if (cp >= 0x400 && cp <= 0x52F) return !(cp >= 0x482 && cp <= 0x489);
  if (cp >= 0x531 && cp <= 0x587) return true;   // Armenian
  if (cp >= 0x5D0 && cp <= 0x5EA) return true;   // Hebrew
  if (cp >= 0x620 && cp <= 0x64A) return true;   // Arabic letters
  if (cp >= 0x660 && cp <= 0x669) return true;   // Arabic-Indic digits
  if (cp >= 0x900 && cp <= 0x97F) return !(cp == 0x964 || cp == 0x965 || cp == 0x970);  // Devanagari
  if (cp >= 0xE00 && cp <= 0xE7F) return true;   // Thai
  if (cp >= 0x1E00 && cp <= 0x1FFF) return true; // Latin/Greek extended
  if (cp >= 0x3040 && cp <= 0x30FF) return cp != 0x30FB;  // kana
  if (cp >= 0x3400 && cp <= 0x4DBF) return true;
  if (cp >= 0x4E00 && cp <= 0x9FFF) return true; // CJK ideographs
  if (cp >= 0xAC00 && cp <= 0xD7A3) return true; // Hangul
  if (cp >= 0xFF10 && cp <= 0xFF19) return true; // fullwidth digits
  if (cp >= 0xFF21 && cp <= 0xFF3A) return true;
  if (cp >= 0xFF41 && cp <= 0xFF5A) return true;
  return false;
}

// Punctuation kept only when flanked by word characters on both sides.
constexpr bool is_inner_punct(char32_t cp) { return cp == '.' || cp == ',' || cp == '\'' || cp == '-'; }

namespace detail {

// Length of an HTML entity starting at `i` ("&amp;", "&#39;", "&#x2F;"), or 0.
inline std::size_t entity_length(std::u32string_view s, std::size_t i) {
  if (s[i] != '&') return 0;
  std::size_t j = i + 1;
  const auto is_alpha = [](char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  const auto is_digit = [](char32_t c) { return c >= '0' && c <= '9'; };
  const auto is_hex = [&](char32_t c) { return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'); };
  std::size_t limit = 32;
  if (j < s.size() && s[j] == '#') {
    ++j;
    bool hex = false;
    if (j < s.size() && (s[j] == 'x' || s[j] == 'X')) {
      hex = true;
      ++j;
    }
    const std::size_t start = j;
    while (j < s.size() && j - start < 8 && (hex ? is_hex(s[j]) : is_digit(s[j]))) ++j;
    if (j == start) return 0;
  } else {
    const std::size_t start = j;
    while (j < s.size() && j - start < limit && is_alpha(s[j])) ++j;
    if (j == start) return 0;
  }
  if (j < s.size() && s[j] == ';') return j + 1 - i;
  return 0;
}

}  // namespace detail

// Keeps letters, digits, single spaces and the inner punctuation set
// {. , ' -} between word characters; everything else (control characters,
// U+FFFD, symbols, HTML entity remnants) becomes a separator. Case is kept.
inline std::string normalize_text(std::string_view input) {
  const std::u32string cps = text::decode_utf8(input);
  std::u32string work;
  work.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size();) {
    if (const auto n = detail::entity_length(cps, i); n > 0) {
      work.push_back(' ');
      i += n;
    } else {
      work.push_back(cps[i++]);
    }
  }

  std::string out;
  out.reserve(work.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const char32_t cp = work[i];
    bool keep = is_word_codepoint(cp);
    if (!keep && is_inner_punct(cp)) {
      keep = i > 0 && i + 1 < work.size() && is_word_codepoint(work[i - 1]) && is_word_codepoint(work[i + 1]);
    }
    if (!keep) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    text::append_utf8(out, cp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deduplication and corpus assembly

inline std::uint64_t content_key(std::string_view normalized_title, std::string_view normalized_description) {
  std::string joined;
  joined.reserve(normalized_title.size() + normalized_description.size() + 1);
  joined.append(normalized_title);
  joined.push_back('\x1f');
  joined.append(normalized_description);
  return text::fnv1a64(joined);
}

inline std::uint64_t dedup_key(const RawPostingRecord& r) {
  return content_key(normalize_text(r.title), normalize_text(r.description));
}

inline std::string posting_id_for(std::string_view normalized_title, std::string_view normalized_description) {
  return text::to_hex(content_key(normalized_title, normalized_description));
}

// Keeps the first record of every dedup key, preserving input order.
inline std::vector<RawPostingRecord> deduplicate(const std::vector<RawPostingRecord>& records) {
  std::vector<RawPostingRecord> out;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& r : records) {
    if (seen.insert(dedup_key(r)).second) out.push_back(r);
  }
  return out;
}

// Optional corpus filters; inclusive date bounds compare YYYY-MM-DD strings.
struct CorpusOptions {
  std::optional<std::string> location_contains;
  std::optional<std::string> date_from;
  std::optional<std::string> date_to;
};

// Incremental form of build_corpus: memory is one 64-bit key per distinct
// posting, independent of record sizes.
class CorpusBuilder {
 public:
  explicit CorpusBuilder(CorpusOptions options = {}) : options_(std::move(options)) {}

  std::optional<CleanPosting> add(const RawPostingRecord& record) {
    ++stats_.raw_count;
    std::string title = normalize_text(record.title);
    std::string description = normalize_text(record.description);
    const auto key = content_key(title, description);
    if (!seen_.insert(key).second) {
      ++stats_.drop_reasons["duplicate"];
      return std::nullopt;
    }
    ++stats_.after_dedup_count;
    if (title.empty()) return drop("empty-title");
    if (description.empty()) return drop("empty-description");
    if (options_.location_contains) {
      const auto needle = text::to_lower_ascii(*options_.location_contains);
      if (!record.location || text::to_lower_ascii(*record.location).find(needle) == std::string::npos) {
        return drop("filtered:location");
      }
    }
    if (options_.date_from || options_.date_to) {
      if (!record.posted_date || (options_.date_from && *record.posted_date < *options_.date_from) ||
          (options_.date_to && *record.posted_date > *options_.date_to)) {
        return drop("filtered:date");
      }
    }
    ++stats_.after_malformed_drop_count;
    return CleanPosting{text::to_hex(key), std::move(title),    std::move(description), record.company,
                        record.location,   record.posted_date, record.url};
  }

  // Parse failures count as raw records that survive deduplication and are
  // removed in the malformed-record step.
  void add_failure(const ParseFailure& failure) {
    ++stats_.raw_count;
    ++stats_.after_dedup_count;
    ++stats_.drop_reasons[failure.reason];
  }

  const CorpusStats& stats() const { return stats_; }

 private:
  std::nullopt_t drop(const char* reason) {
    ++stats_.drop_reasons[reason];
    return std::nullopt;
  }

  CorpusOptions options_;
  CorpusStats stats_;
  std::unordered_set<std::uint64_t> seen_;
};

struct Corpus {
  std::vector<CleanPosting> postings;
  CorpusStats stats;
};

inline Corpus build_corpus(const std::vector<RawPostingRecord>& records, const std::vector<ParseFailure>& failures,
                           const CorpusOptions& options = {}) {
  CorpusBuilder builder(options);
  Corpus corpus;
  for (const auto& r : records) {
    if (auto p = builder.add(r)) corpus.postings.push_back(std::move(*p));
  }
  for (const auto& f : failures) builder.add_failure(f);
  corpus.stats = builder.stats();
  return corpus;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const CleanPosting& p) {
  const auto opt = [](const std::optional<std::string>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["posting_id"] = p.posting_id;
  j["title"] = p.title;
  j["description"] = p.description;
  j["company"] = opt(p.company);
  j["location"] = opt(p.location);
  j["posted_date"] = opt(p.posted_date);
  j["url"] = opt(p.url);
  return j;
}

inline CleanPosting posting_from_json(const nlohmann::json& j) {
  const auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  return CleanPosting{j.at("posting_id").get<std::string>(), j.at("title").get<std::string>(),
                      j.at("description").get<std::string>(), opt("company"), opt("location"),
                      opt("posted_date"), opt("url")};
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["raw_count"] = s.raw_count;
  j["after_dedup_count"] = s.after_dedup_count;
  j["after_malformed_drop_count"] = s.after_malformed_drop_count;
  j["drop_reasons"] = nlohmann::ordered_json::object();
  for (const auto& [reason, count] : s.drop_reasons) j["drop_reasons"][reason] = count;
  return j;
}

inline CorpusStats stats_from_json(const nlohmann::json& j) {
  CorpusStats s;
  s.raw_count = j.at("raw_count").get<std::uint64_t>();
  s.after_dedup_count = j.at("after_dedup_count").get<std::uint64_t>();
  s.after_malformed_drop_count = j.at("after_malformed_drop_count").get<std::uint64_t>();
  for (const auto& [reason, count] : j.at("drop_reasons").items()) s.drop_reasons[reason] = count.get<std::uint64_t>();
  return s;
}

inline void write_corpus_line(std::ostream& out, const CleanPosting& p) { out << to_json(p).dump() << '\n'; }

// Streams a corpus file written by write_corpus_line.
inline void read_corpus(std::istream& in, const std::function<void(CleanPosting&&)>& on_posting) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      on_posting(posting_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(IngestErrc::BadCorpus, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw IngestError(IngestErrc::Io, "read error on corpus input");
}

}  // namespace occmap::ingest
