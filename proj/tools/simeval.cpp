// simeval: synthetic data, baseline rollouts, submission checks, scoring.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "simeval/evaluation.hpp"
#include "simeval/harness.hpp"
#include "simeval/io.hpp"
#include "simeval/synth.hpp"

using namespace simeval;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitContract = 3;

constexpr const char* kConfigEnv = "SIMEVAL_CONFIG";

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the exception
// of the lowest failing index so failures do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string tmpl = "all";
  std::size_t count = 6;
  std::uint64_t seed = 0;
  std::size_t agents = 4;
  double noise = 0.5;
  std::string out;
  bool binary = false;
};

int run_synth(const SynthArgs& a) {
  std::vector<SynthOutput> outputs;
  if (a.tmpl == "all") {
    outputs = synthetic_suite(a.count, a.seed, a.agents, a.noise);
  } else {
    const auto t = template_from_name(a.tmpl);
    if (!t) throw Error(ErrorCode::InvalidArgument, "unknown template '" + a.tmpl + "'");
    for (std::size_t i = 0; i < a.count; ++i) outputs.push_back(generate({*t, a.agents, a.seed + i, a.noise}));
  }
  fs::create_directories(a.out);
  for (const auto& o : outputs) {
    const std::string id = o.scenario.scenario_id;
    write_scenario(fs::path(a.out) / (id + (a.binary ? ".scenario.bin" : ".scenario.json")), o.scenario);
    write_file(fs::path(a.out) / (id + ".fixture.json"), to_json(o.fixture).dump(2) + "\n");
  }
  const json manifest = {{"format", "simeval.synth"}, {"template", a.tmpl}, {"count", a.count},
                         {"seed", a.seed},           {"agents", a.agents}, {"noise", a.noise}};
  write_file(fs::path(a.out) / "synth.json", manifest.dump(2) + "\n");
  std::printf("wrote %zu scenarios to %s (template=%s seed=%llu)\n", outputs.size(), a.out.c_str(), a.tmpl.c_str(),
              static_cast<unsigned long long>(a.seed));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rollout

struct RolloutArgs {
  std::string scenarios;
  std::string env_policy = "constant_velocity";
  std::string av_policy = "constant_velocity";
  std::size_t k = kRolloutsPerScenario;
  std::size_t replan = 1;
  std::uint64_t seed = 0;
  std::size_t shards = 1;
  std::size_t jobs = default_jobs();
  std::vector<std::string> params;
  std::string submitter = "simeval";
  std::string out;
};

PolicyParams parse_params(const std::vector<std::string>& items) {
  PolicyParams p;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected key=value, got '" + item + "'");
    try {
      p[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "not a number in '" + item + "'");
    }
  }
  return p;
}

int run_rollout(const RolloutArgs& a) {
  const auto registry = default_policy_registry();
  for (const auto& name : {a.env_policy, a.av_policy})
    if (!registry.contains(name)) throw Error(ErrorCode::InvalidArgument, "unknown policy '" + name + "'");
  const PolicyParams params = parse_params(a.params);
  const std::vector<Scenario> scenarios = read_scenario_dir(a.scenarios);
  if (scenarios.empty()) throw Error(ErrorCode::Io, "no scenario files in " + a.scenarios);

  std::vector<ScenarioRollouts> records(scenarios.size());
  std::vector<std::vector<AuditReport>> audits(scenarios.size());
  parallel_for(scenarios.size(), a.jobs, [&](std::size_t i) {
    const Scenario& s = scenarios[i];
    auto av = registry.create(a.av_policy, s, params, a.replan);
    auto env = registry.create(a.env_policy, s, params, a.replan);
    std::vector<RolloutTrace> traces;
    records[i] = generate_submission(s, *av, *env, a.k, a.seed, &traces);
    for (const auto& t : traces) audits[i].push_back(audit_trace(t, a.replan));
  });

  bool audit_ok = true;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    std::size_t passed = 0, interval = 1;
    bool hybrid = false;
    for (const auto& r : audits[i]) {
      passed += r.passed ? 1 : 0;
      interval = std::max(interval, r.effective_replan_interval);
      hybrid = hybrid || r.hybrid;
    }
    const bool ok = passed == audits[i].size();
    audit_ok = audit_ok && ok;
    std::printf("%-40s audit=%s rollouts=%zu/%zu replan_interval=%zu mode=%s\n", scenarios[i].scenario_id.c_str(),
                ok ? "PASS" : "FAIL", passed, audits[i].size(), interval, hybrid ? "hybrid" : "closed_loop");
    if (!ok)
      for (const auto& r : audits[i])
        for (const auto& issue : r.issues) std::printf("  %s\n", issue.c_str());
  }

  SubmissionArchive archive;
  archive.manifest = {a.submitter, a.av_policy, a.env_policy, a.replan, a.k, a.seed, kFormatVersion};
  archive.shards = make_shards(std::move(records), a.shards);
  write_archive(a.out, archive);
  std::printf("wrote %s (%zu scenarios, %zu shards, av=%s env=%s k=%zu replan=%zu seed=%llu)\n", a.out.c_str(),
              scenarios.size(), archive.shards.size(), a.av_policy.c_str(), a.env_policy.c_str(), a.k, a.replan,
              static_cast<unsigned long long>(a.seed));
  return audit_ok ? kExitOk : kExitContract;
}

// ---------------------------------------------------------------------------
// validate

void print_validation(const ValidationReport& rep, const std::string& archive, std::uint64_t seed) {
  for (const auto& v : rep.violations) {
    std::string ids;
    for (ObjectId id : v.object_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    std::printf("%s %s %s%s%s\n", v.code.c_str(), v.scenario_id.c_str(), v.detail.c_str(),
                ids.empty() ? "" : " objects=", ids.c_str());
  }
  std::printf("%s: %zu scenarios checked, %zu violations, %s (seed=%llu)\n", archive.c_str(), rep.scenarios_checked,
              rep.violations.size(), rep.ok() ? "OK" : "INVALID", static_cast<unsigned long long>(seed));
}

int run_validate(const std::string& archive_path, const std::string& scenario_dir) {
  const SubmissionArchive archive = read_archive(archive_path);
  const std::vector<Scenario> scenarios = read_scenario_dir(scenario_dir);
  const ValidationReport rep = validate_submission(archive, scenarios);
  print_validation(rep, archive_path, archive.manifest.seed);
  return rep.ok() ? kExitOk : kExitValidation;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::vector<std::string> archives;
  std::string scenarios;
  std::string config;
  std::string out;
  std::string csv;
  std::string plot;
  std::size_t jobs = default_jobs();
};

struct Evaluated {
  std::string archive;
  SubmissionManifest manifest;
  std::vector<MetricsBundle> bundles;
  DatasetSummary summary;
};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string series_label(const Evaluated& e) {
  std::string label = e.manifest.env_policy;
  if (e.manifest.av_policy != e.manifest.env_policy) label = e.manifest.av_policy + "/" + label;
  if (e.manifest.replan_interval > 1) label += "@" + std::to_string(e.manifest.replan_interval);
  return label;
}

// Grouped bars: one group per component, one bar per evaluated archive.
std::string component_chart(const std::vector<Evaluated>& runs) {
  static const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  const double group_w = 90, bar_w = std::min(24.0, 80.0 / static_cast<double>(runs.size())), top = 30, h = 240;
  const double left = 50, width = left + group_w * (kNumMetrics + 1) + 20, height = top + h + 120;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">Component likelihoods</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = top + h - h * tick / 4.0;
    s << "<line x1=\"" << left << "\" x2=\"" << width - 20 << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/><text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
      << tick / 4.0 << "</text>\n";
  }
  std::vector<std::string> names;
  for (MetricKind m : kAllMetrics) names.emplace_back(metric_name(m));
  names.push_back("composite");
  for (std::size_t g = 0; g < names.size(); ++g) {
    const double gx = left + group_w * static_cast<double>(g) + 5;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const double v = g < kNumMetrics ? runs[r].summary.component[g].value_or(0.0) : runs[r].summary.composite;
      const double bh = h * std::clamp(v, 0.0, 1.0);
      s << "<rect x=\"" << gx + bar_w * static_cast<double>(r) << "\" y=\"" << top + h - bh << "\" width=\""
        << bar_w - 2 << "\" height=\"" << bh << "\" fill=\"" << kColors[r % 8] << "\"><title>"
        << svg_escape(series_label(runs[r])) << " " << names[g] << " = " << v << "</title></rect>\n";
    }
    s << "<text transform=\"translate(" << gx + 10 << "," << top + h + 10 << ") rotate(40)\">" << names[g]
      << "</text>\n";
  }
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const double y = 14 + 14 * static_cast<double>(r);
    s << "<rect x=\"" << width - 200 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
      << kColors[r % 8] << "\"/><text x=\"" << width - 185 << "\" y=\"" << y << "\">"
      << svg_escape(series_label(runs[r])) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string replan_curve_svg(const std::vector<std::pair<std::size_t, double>>& pts) {
  const double left = 60, top = 30, w = 360, h = 200;
  std::size_t max_r = 1;
  double lo = 1.0, hi = 0.0;
  for (const auto& [r, c] : pts) {
    max_r = std::max(max_r, r);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.05;
    hi += 0.05;
  }
  auto px = [&](std::size_t r) { return left + w * (static_cast<double>(r) - 1) / std::max<double>(1.0, static_cast<double>(max_r) - 1); };
  auto py = [&](double c) { return top + h - h * (c - lo) / (hi - lo); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + w + 40 << "\" height=\"" << top + h + 50
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"18\" font-size=\"14\">Composite vs replan interval</text>\n";
  s << "<polyline fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\" points=\"";
  for (const auto& [r, c] : pts) s << px(r) << "," << py(c) << " ";
  s << "\"/>\n";
  for (const auto& [r, c] : pts)
    s << "<circle cx=\"" << px(r) << "\" cy=\"" << py(c) << "\" r=\"3\" fill=\"#4c72b0\"><title>" << r << ": "
      << c << "</title></circle><text x=\"" << px(r) << "\" y=\"" << top + h + 16 << "\" text-anchor=\"middle\">"
      << r << "</text>\n";
  s << "<text x=\"" << left - 8 << "\" y=\"" << py(hi) + 4 << "\" text-anchor=\"end\">" << hi << "</text>";
  s << "<text x=\"" << left - 8 << "\" y=\"" << py(lo) + 4 << "\" text-anchor=\"end\">" << lo << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

void write_plots(const fs::path& dir, const std::vector<Evaluated>& runs) {
  fs::create_directories(dir);
  write_file(dir / "components.svg", component_chart(runs));
  if (runs.size() < 2) return;
  std::string csv = "archive,av_policy,env_policy,replan_interval,seed,composite\n";
  std::vector<std::pair<std::size_t, double>> pts;
  for (const auto& r : runs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.summary.composite);
    csv += r.archive + "," + r.manifest.av_policy + "," + r.manifest.env_policy + "," +
           std::to_string(r.manifest.replan_interval) + "," + std::to_string(r.manifest.seed) + "," + buf + "\n";
    pts.emplace_back(r.manifest.replan_interval, r.summary.composite);
  }
  write_file(dir / "replan_curve.csv", csv);
  std::sort(pts.begin(), pts.end());
  write_file(dir / "replan_curve.svg", replan_curve_svg(pts));
}

EvalConfig load_config(const std::string& path) {
  if (!path.empty()) return read_config(path);
  if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') return read_config(env);
  return EvalConfig{};
}

fs::path output_for(const std::string& out, const std::string& archive, std::size_t count, const char* ext) {
  if (count == 1) return out;
  std::string stem = fs::path(archive).filename().string();
  for (const char* suffix : {".tar.gz", ".tgz"})
    if (stem.ends_with(suffix)) stem.resize(stem.size() - std::strlen(suffix));
  fs::create_directories(out);
  return fs::path(out) / (stem + ext);
}

int run_evaluate(const EvaluateArgs& a) {
  const EvalConfig config = load_config(a.config);
  const std::vector<Scenario> scenarios = read_scenario_dir(a.scenarios);
  std::map<std::string, const Scenario*> by_id;
  for (const auto& s : scenarios) by_id[s.scenario_id] = &s;

  std::vector<Evaluated> runs;
  for (const std::string& path : a.archives) {
    const SubmissionArchive archive = read_archive(path);
    const ValidationReport rep = validate_submission(archive, scenarios);
    if (!rep.ok()) {
      print_validation(rep, path, archive.manifest.seed);
      return kExitValidation;
    }
    std::vector<const ScenarioRollouts*> records;
    for (const auto& shard : archive.shards)
      for (const auto& r : shard) records.push_back(&r);
    std::sort(records.begin(), records.end(), [](auto* x, auto* y) { return x->scenario_id < y->scenario_id; });

    Evaluated ev{path, archive.manifest, std::vector<MetricsBundle>(records.size()), {}};
    parallel_for(records.size(), a.jobs, [&](std::size_t i) {
      ev.bundles[i] = evaluate_scenario(*by_id.at(records[i]->scenario_id), *records[i], config).bundle;
    });
    ev.summary = summarize(ev.bundles);

    const ReportHeader header{config, path, archive.manifest};
    const fs::path out = output_for(a.out, path, a.archives.size(), ".json");
    write_report(ev.bundles, ev.summary, out, ReportFormat::Json, header);
    if (!a.csv.empty())
      write_report(ev.bundles, ev.summary, output_for(a.csv, path, a.archives.size(), ".csv"), ReportFormat::Csv,
                   header);
    std::printf("%s: %zu scenarios composite=%.6f ade=%.4f min_ade=%.4f -> %s (seed=%llu)\n", path.c_str(),
                ev.bundles.size(), ev.summary.composite, ev.summary.ade, ev.summary.min_ade, out.string().c_str(),
                static_cast<unsigned long long>(archive.manifest.seed));
    runs.push_back(std::move(ev));
  }
  if (!a.plot.empty()) write_plots(a.plot, runs);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compare

std::vector<std::size_t> ranks(const std::vector<double>& v, bool higher_better) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return higher_better ? v[x] > v[y] : v[x] < v[y]; });
  std::vector<std::size_t> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = i + 1;
  return r;
}

int run_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<LoadedReport> reports;
  for (const auto& p : paths) {
    reports.push_back(read_report(p));
    reports.back().label = p;
    if (!reports.back().summary) throw Error(ErrorCode::InvalidArgument, p + " has no summary");
  }
  std::vector<double> comp, ade, min_ade;
  for (const auto& r : reports) {
    comp.push_back(r.summary->composite);
    ade.push_back(r.summary->ade);
    min_ade.push_back(r.summary->min_ade);
  }
  const auto rc = ranks(comp, true), ra = ranks(ade, false), rm = ranks(min_ade, false);
  std::string csv = "report,seed,composite,composite_rank,ade,ade_rank,min_ade,min_ade_rank\n";
  std::printf("%-36s %8s %10s %4s %10s %4s %10s %4s\n", "report", "seed", "composite", "rk", "ade", "rk", "min_ade", "rk");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto seed = reports[i].header.value("seed", std::uint64_t{0});
    std::printf("%-36s %8llu %10.6f %4zu %10.4f %4zu %10.4f %4zu\n", reports[i].label.c_str(),
                static_cast<unsigned long long>(seed), comp[i], rc[i], ade[i], ra[i], min_ade[i], rm[i]);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%zu,%.17g,%zu,%.17g,%zu\n", static_cast<unsigned long long>(seed),
                  comp[i], rc[i], ade[i], ra[i], min_ade[i], rm[i]);
    csv += reports[i].label + "," + buf;
  }
  std::printf("composite vs ade ranking: %s\n", rc == ra ? "agree" : "disagree");
  std::printf("composite vs min_ade ranking: %s\n", rc == rm ? "agree" : "disagree");
  if (!out.empty()) write_file(out, csv);
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::PolicyContractViolation: return kExitContract;
    case ErrorCode::MalformedScenario:
    case ErrorCode::InconsistentRollouts: return kExitValidation;
    default: return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Realism scoring for multi-agent traffic simulation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic scenarios and their feature fixtures");
  s->add_option("--template", synth.tmpl, "Template name, or 'all' to cycle through every template")
      ->capture_default_str();
  s->add_option("--count", synth.count, "Number of scenarios")->capture_default_str();
  s->add_option("--seed", synth.seed, "Base seed")->capture_default_str();
  s->add_option("--agents", synth.agents, "Agents per scenario")->capture_default_str();
  s->add_option("--noise", synth.noise, "Perturbation level")->capture_default_str();
  s->add_flag("--binary", synth.binary, "Write .scenario.bin instead of JSON");
  s->add_option("--out", synth.out, "Output directory")->required();

  RolloutArgs roll;
  auto* r = app.add_subcommand("rollout", "Run closed-loop rollouts and package a submission archive");
  r->add_option("--scenarios", roll.scenarios, "Scenario directory")->required();
  r->add_option("--env-policy", roll.env_policy, "Policy for every non-AV object")->capture_default_str();
  r->add_option("--av-policy", roll.av_policy, "Policy for the AV")->capture_default_str();
  r->add_option("--k", roll.k, "Rollouts per scenario")->capture_default_str();
  r->add_option("--replan-interval", roll.replan, "Steps between planner calls")->capture_default_str();
  r->add_option("--seed", roll.seed, "Base seed")->capture_default_str();
  r->add_option("--shards", roll.shards, "Number of archive shards")->capture_default_str();
  r->add_option("--param", roll.params, "Policy parameter key=value (repeatable)");
  r->add_option("--submitter", roll.submitter, "Name stored in the manifest")->capture_default_str();
  r->add_option("--jobs", roll.jobs, "Worker threads")->capture_default_str();
  r->add_option("--out", roll.out, "Archive path: a directory or a .tar.gz")->required();

  std::string v_archive, v_scenarios;
  auto* v = app.add_subcommand("validate", "Check a submission archive against the scenarios");
  v->add_option("--archive", v_archive, "Submission archive")->required();
  v->add_option("--scenarios", v_scenarios, "Scenario directory")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score submission archives");
  e->add_option("--archive", ev.archives, "Submission archive (repeatable)")->required();
  e->add_option("--scenarios", ev.scenarios, "Scenario directory")->required();
  e->add_option("--config", ev.config, std::string("Config file (default: $") + kConfigEnv + ", then built-in)");
  e->add_option("--out", ev.out, "JSON report; a directory when several archives are given")->required();
  e->add_option("--csv", ev.csv, "CSV report; a directory when several archives are given");
  e->add_option("--plot", ev.plot, "Directory for SVG charts and replan curve data");
  e->add_option("--jobs", ev.jobs, "Worker threads")->capture_default_str();

  std::vector<std::string> c_reports;
  std::string c_out;
  auto* c = app.add_subcommand("compare", "Rank reports by composite, ADE and minADE");
  c->add_option("--reports", c_reports, "JSON reports")->required()->expected(1, -1);
  c->add_option("--out", c_out, "Optional CSV of the ranking table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitIo;
  }

  try {
    if (s->parsed()) return run_synth(synth);
    if (r->parsed()) return run_rollout(roll);
    if (v->parsed()) return run_validate(v_archive, v_scenarios);
    if (e->parsed()) return run_evaluate(ev);
    if (c->parsed()) return run_compare(c_reports, c_out);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return exit_code_for(err);
  } catch (const std::filesystem::filesystem_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitIo;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitIo;
  }
  return kExitOk;
}
