// occmap: match transformation-initiative definitions against a job-posting
// corpus and populate the occupation ontology.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "occmap/pipeline.hpp"

namespace pl = occmap::pipeline;

namespace {

struct Overrides {
  std::string config;
  std::optional<double> threshold;
  std::optional<std::size_t> top_k;
  std::optional<std::size_t> max_tokens;
  std::optional<std::string> provider;
  std::optional<std::string> out_dir;
  std::optional<std::string> rules;
};

pl::RunConfig resolve(const Overrides& o) {
  pl::RunConfig c = o.config.empty() ? pl::RunConfig{} : pl::load_run_config(o.config);
  if (o.threshold) c.threshold = *o.threshold;
  if (o.top_k) c.top_k = *o.top_k;
  if (o.max_tokens) c.max_tokens = *o.max_tokens;
  if (o.provider) c.provider.name = *o.provider;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.rules) c.rules = *o.rules;
  pl::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occmap - map transformation initiatives to occupations in job-posting data"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "key=value run configuration file");
  app.add_option("--threshold", o.threshold, "cosine threshold, inclusive (default 0.70)");
  app.add_option("--top-k", o.top_k, "occupation groups per driver in tables (default 10)");
  app.add_option("--max-tokens", o.max_tokens, "token budget per embedded text (default 8192)");
  app.add_option("--provider", o.provider, "embedding provider: local or remote");
  app.add_option("--out-dir", o.out_dir, "output directory");
  app.add_option("--rules", o.rules, "title consolidation rules file");

  auto* ingest = app.add_subcommand("ingest", "clean and deduplicate the posting corpus");
  auto* embed = app.add_subcommand("embed", "embed postings and driver definitions into the cache");
  auto* match = app.add_subcommand("match", "rank postings per driver and consolidate titles");
  auto* populate = app.add_subcommand("populate", "propose ontology links, or commit a reviewed file");
  std::optional<std::string> review;
  populate->add_option("--review", review, "edited review file to commit")->check(CLI::ExistingFile);
  auto* report = app.add_subcommand("report", "render tables and histogram data from match outputs");
  auto* run = app.add_subcommand("run", "ingest, embed, match and report in sequence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? pl::kExitOk : pl::kExitUsage;
  }

  try {
    pl::Context ctx(resolve(o));
    if (ingest->parsed()) pl::cmd_ingest(ctx);
    if (embed->parsed()) pl::cmd_embed(ctx);
    if (match->parsed()) pl::cmd_match(ctx);
    if (populate->parsed()) pl::cmd_populate(ctx, review);
    if (report->parsed()) pl::cmd_report(ctx);
    if (run->parsed()) {
      pl::cmd_ingest(ctx);
      pl::cmd_embed(ctx);
      pl::cmd_match(ctx);
      if (std::filesystem::exists(ctx.layout.match_summary())) pl::cmd_report(ctx);
    }
  } catch (const std::exception& e) {
    std::cerr << "occmap: error: " << e.what() << '\n';
    return pl::exit_code_for(std::current_exception());
  }
  return pl::kExitOk;
}
