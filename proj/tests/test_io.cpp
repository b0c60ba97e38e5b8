#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "builders.hpp"
#include "simeval/harness.hpp"
#include "simeval/io.hpp"
#include "simeval/synth.hpp"

using namespace simeval;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("simeval_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Scenario random_scenario(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  std::uniform_int_distribution<int> n(1, 6);
  Scenario s;
  s.scenario_id = "rand-" + std::to_string(rng() % 100000);
  const int objects = n(rng);
  for (int i = 0; i < objects; ++i) {
    Track t{static_cast<ObjectId>(i * 7 + 1), static_cast<ObjectType>(rng() % 3), 1 + std::abs(u(rng)) / 1e3,
            1 + std::abs(u(rng)) / 1e3, 1 + std::abs(u(rng)) / 1e3, {}};
    for (std::size_t k = 0; k < s.total_steps(); ++k)
      t.states.push_back(rng() % 5 == 0 && k != s.current_index() ? ObjectState::invalid()
                                                                  : ObjectState::at(u(rng), u(rng), u(rng), u(rng)));
    s.tracks.push_back(std::move(t));
  }
  s.av_track_id = s.tracks[0].object_id;
  for (int i = 0; i < n(rng); ++i) {
    MapFeature f{i, static_cast<MapFeatureKind>(rng() % 3), {}};
    for (int p = 0; p < n(rng) + 1; ++p) f.polyline.push_back({u(rng), u(rng)});
    s.map.push_back(std::move(f));
  }
  return s;
}

ScenarioRollouts cv_rollouts(const Scenario& s, std::size_t k = kRolloutsPerScenario) {
  ConstantVelocityAgent av, env;
  return generate_submission(s, av, env, k, 0);
}

}  // namespace

TEST_CASE("scenario round trips", "[io]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Scenario s = random_scenario(rng);
    CHECK(scenario_from_json(to_json(s)) == s);
    CHECK(scenario_from_json(json::parse(to_json(s).dump())) == s);
    CHECK(decode_scenario_binary(encode_scenario_binary(s)) == s);
  }
  for (const auto& out : synthetic_suite(6, 1)) {
    CHECK(decode_scenario_binary(encode_scenario_binary(out.scenario)) == out.scenario);
    CHECK(scenario_from_json(json::parse(to_json(out.scenario).dump())) == out.scenario);
  }
}

TEST_CASE("rollout round trips", "[io]") {
  const auto s = generate({SynthTemplate::CurvedRoad, 3, 2, 0.4}).scenario;
  const auto reg = default_policy_registry();
  auto av = reg.create("noisy_planner", s), env = reg.create("noisy_planner", s);
  const std::vector<ScenarioRollouts> records{generate_submission(s, *av, *env, 4, 1)};
  CHECK(decode_rollouts_binary(encode_rollouts_binary(records)) == records);
  CHECK(rollouts_from_json(json::parse(to_json(records[0]).dump())) == records[0]);

  TempDir dir("rollouts");
  for (const char* name : {"r.bin", "r.json"}) {
    write_rollouts(dir.path / name, records);
    CHECK(read_rollouts(dir.path / name) == records);
  }
}

TEST_CASE("files pick their format from the extension", "[io]") {
  TempDir dir("files");
  const auto s = generate({SynthTemplate::FollowingPair, 2, 1, 0.0}).scenario;
  write_scenario(dir.path / "a.scenario.json", s);
  write_scenario(dir.path / "b.scenario.bin", s);
  write_file(dir.path / "notes.txt", "x");
  CHECK(read_file(dir.path / "b.scenario.bin").starts_with("SEVB"));
  CHECK(read_file(dir.path / "a.scenario.json").starts_with("{"));
  CHECK(read_scenario(dir.path / "a.scenario.json") == s);
  CHECK(read_scenario(dir.path / "b.scenario.bin") == s);
  CHECK(read_scenario_dir(dir.path).size() == 2);
  CHECK_THROWS_AS(read_scenario(dir.path / "missing.scenario.json"), Error);
}

TEST_CASE("headings are normalized on load", "[io]") {
  auto s = build::scenario("h", {build::parked(0, 0, 0), build::parked(1, 9, 0)});
  json j = to_json(s);
  j["tracks"][0]["states"][3][3] = 7.0;
  const Scenario loaded = scenario_from_json(j);
  CHECK(loaded.tracks[0].states[3].heading == Approx(7.0 - 2.0 * std::numbers::pi).margin(1e-12));
  CHECK_NOTHROW(validate_scenario(loaded));
}

TEST_CASE("malformed input raises ParseError", "[io]") {
  const auto s = generate({SynthTemplate::StraightRoad, 2, 1, 0.0}).scenario;
  const std::string bytes = encode_scenario_binary(s);

  SECTION("truncated binary") {
    try {
      decode_scenario_binary(std::string_view(bytes).substr(0, bytes.size() / 2), "cut.bin");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.path() == "cut.bin");
      CHECK(e.offset() > 0);
      CHECK(e.offset() <= bytes.size() / 2);
    }
  }
  SECTION("bad magic and version") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_scenario_binary(bad), ParseError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_scenario_binary(bad), ParseError);
  }
  SECTION("trailing bytes") { CHECK_THROWS_AS(decode_scenario_binary(bytes + "zz"), ParseError); }
  SECTION("broken json") {
    TempDir dir("badjson");
    write_file(dir.path / "x.scenario.json", "{\"scenario_id\": ");
    try {
      read_scenario(dir.path / "x.scenario.json");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.path().ends_with("x.scenario.json"));
    }
  }
  SECTION("random truncations never crash") {
    for (std::size_t cut = 0; cut < bytes.size(); cut += 97) CHECK_THROWS_AS(decode_scenario_binary(bytes.substr(0, cut)), ParseError);
  }
}

TEST_CASE("submission archives", "[io]") {
  std::vector<Scenario> scenarios;
  std::vector<ScenarioRollouts> records;
  for (const auto& out : synthetic_suite(5, 2)) {
    scenarios.push_back(out.scenario);
    records.push_back(cv_rollouts(out.scenario));
  }
  SubmissionArchive archive{{"tester", "constant_velocity", "constant_velocity", 1, 32, 17, 1}, make_shards(records, 2)};
  REQUIRE(archive.shards.size() == 2);
  CHECK(shard_name(0, 2) == "rollouts.00000-of-00002.bin");

  TempDir dir("archive");
  for (const fs::path& p : {dir.path / "sub", dir.path / "sub.tar.gz"}) {
    write_archive(p, archive);
    const auto loaded = read_archive(p);
    INFO(p);
    CHECK(loaded.manifest == archive.manifest);
    CHECK(loaded.shards == archive.shards);
    CHECK(validate_submission(loaded, scenarios).ok());
  }
  // gzip output is reproducible
  write_archive(dir.path / "again.tar.gz", archive);
  CHECK(read_file(dir.path / "again.tar.gz") == read_file(dir.path / "sub.tar.gz"));
  CHECK_THROWS_AS(read_archive(dir.path / "nope"), Error);
}

TEST_CASE("make_shards", "[io]") {
  std::vector<ScenarioRollouts> records(7);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].scenario_id = std::to_string(i);
  for (std::size_t n : {1, 2, 3, 7, 20}) {
    const auto shards = make_shards(records, n);
    std::vector<std::string> ids;
    for (const auto& sh : shards) {
      CHECK_FALSE(sh.empty());
      for (const auto& r : sh) ids.push_back(r.scenario_id);
    }
    CHECK(ids == std::vector<std::string>{"0", "1", "2", "3", "4", "5", "6"});
    CHECK(shards.size() == std::min<std::size_t>(n, 7));
  }
}

TEST_CASE("validate_submission", "[io]") {
  const auto s = generate({SynthTemplate::StraightRoad, 3, 1, 0.0}).scenario;
  const auto other = generate({SynthTemplate::CurvedRoad, 2, 1, 0.0}).scenario;
  const std::vector<Scenario> scenarios{s, other};
  const auto good = cv_rollouts(s);
  const auto good_other = cv_rollouts(other);
  auto check = [&](std::vector<std::vector<ScenarioRollouts>> shards) {
    return validate_submission({{}, std::move(shards)}, scenarios);
  };

  CHECK(check({{good, good_other}}).ok());
  CHECK(check({{good}, {good_other}}).ok());

  SECTION("missing object names the object") {
    auto bad = good;
    bad.rollouts[4].trajectories.erase(2);
    const auto rep = check({{bad, good_other}});
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].code == "MISSING_OBJECT");
    CHECK(rep.violations[0].object_ids == std::vector<ObjectId>{2});
    CHECK(rep.violations[0].scenario_id == s.scenario_id);
  }
  SECTION("31 rollouts") {
    auto bad = good;
    bad.rollouts.pop_back();
    const auto rep = check({{bad, good_other}});
    CHECK(rep.has("BAD_ROLLOUT_COUNT"));
    CHECK(rep.violations.size() == 1);
  }
  SECTION("duplicate, unknown and missing scenarios") {
    auto stranger = good;
    stranger.scenario_id = "who";
    for (auto& r : stranger.rollouts) r.scenario_id = "who";
    const auto rep = check({{good}, {good, stranger}});
    CHECK(rep.has("DUPLICATE_SCENARIO"));
    CHECK(rep.has("UNKNOWN_SCENARIO"));
    CHECK(rep.has("MISSING_SCENARIO"));
  }
  SECTION("per-state problems") {
    auto bad = good;
    bad.rollouts[0].trajectories[7] = bad.rollouts[0].trajectories[0];
    bad.rollouts[1].trajectories[0].pop_back();
    bad.rollouts[2].trajectories[1][5].valid = false;
    bad.rollouts[3].trajectories[1][6].y = INFINITY;
    bad.rollouts[4].scenario_id = "elsewhere";
    const auto rep = check({{bad, good_other}});
    for (const char* code : {"EXTRA_OBJECT", "BAD_STEP_COUNT", "INVALID_STATE", "NON_FINITE", "SCENARIO_ID_MISMATCH"}) {
      INFO(code);
      CHECK(rep.has(code));
    }
    CHECK_FALSE(rep.has("MISSING_OBJECT"));
  }
}

TEST_CASE("reports", "[io]") {
  MetricsBundle a{"a", {}, {}, 0.4, 1.0, 0.5};
  MetricsBundle b{"b", {}, {MetricKind::DistToRoadEdge}, 0.6, 3.0, 1.5};
  for (auto& c : a.component) c = 0.4;
  for (auto& c : b.component) c = 0.6;
  b.component[index_of(MetricKind::DistToRoadEdge)].reset();
  const std::vector<MetricsBundle> bundles{a, b};
  const auto summary = summarize(bundles);
  CHECK(summary.composite == Approx(0.5).epsilon(1e-12));
  CHECK(summary.ade == Approx(2.0).epsilon(1e-12));
  CHECK(*summary.component[index_of(MetricKind::DistToRoadEdge)] == 0.4);

  SECTION("csv") {
    const std::string csv = render_report(bundles, summary, ReportFormat::Csv);
    std::istringstream in(csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == csv_header());
    CHECK(lines[0].starts_with("scenario_id,linear_speed"));
    CHECK(lines[0].ends_with(",composite,ade,min_ade"));
    CHECK(lines[1].starts_with("a,0.40000000000000002,"));
    CHECK(lines[2].find(",,") != std::string::npos);
    CHECK(lines[3].starts_with(kDatasetRowId + ","));
    CHECK(render_report({}, std::nullopt, ReportFormat::Csv) == csv_header() + "\n");
  }
  SECTION("json round trip") {
    TempDir dir("report");
    ReportHeader header;
    header.archive = "sub.tar.gz";
    header.manifest.seed = 1234;
    write_report(bundles, summary, dir.path / "r.json", ReportFormat::Json, header);
    const json j = json::parse(read_file(dir.path / "r.json"));
    CHECK(j.at("seed") == 1234);
    CHECK(j.at("config").at("histogram_scope") == "per_object");
    CHECK(j.at("config").at("weights").at("collision_indication").get<double>() ==
          Approx(2.0 / 11.0).margin(1e-12));
    const auto loaded = read_report(dir.path / "r.json");
    REQUIRE(loaded.bundles.size() == 2);
    CHECK(loaded.bundles[1].component == b.component);
    CHECK(loaded.bundles[1].excluded == b.excluded);
    CHECK(loaded.bundles[0].composite == a.composite);
    REQUIRE(loaded.summary);
    CHECK(loaded.summary->composite == summary.composite);
    CHECK_FALSE(json::parse(render_report({}, std::nullopt, ReportFormat::Json)).contains("summary"));
  }
}

TEST_CASE("config", "[io]") {
  SECTION("defaults echo and reload") {
    const EvalConfig c;
    const EvalConfig back = config_from_json(to_json(c));
    for (MetricKind m : kAllMetrics) {
      CHECK(back.weights[m] == Approx(c.weights[m]).margin(1e-12));
      CHECK(back.histograms[index_of(m)].bins == c.histograms[index_of(m)].bins);
    }
    CHECK(back.histogram_scope == c.histogram_scope);
  }
  SECTION("partial override") {
    const auto c = config_from_json(json::parse(R"({"weights": {"collision_indication": 1.0},
        "pseudocount": 0.5, "histograms": {"linear_speed": {"bins": 64}},
        "histogram_scope": "per_scenario"})"));
    // unspecified weights keep their defaults before rescaling: 9/11 + 1
    CHECK(c.weights[MetricKind::CollisionIndication] == Approx(11.0 / 20.0).epsilon(1e-12));
    CHECK(c.weights[MetricKind::OffroadIndication] == Approx(0.1).epsilon(1e-12));
    CHECK(c.weights.sum() == Approx(1.0).epsilon(1e-12));
    CHECK(c.histograms[index_of(MetricKind::LinearSpeed)].bins == 64);
    CHECK(c.histograms[index_of(MetricKind::LinearAccelMag)].pseudocount == 0.5);
    CHECK(c.histogram_scope == HistogramScope::PerScenario);
  }
  SECTION("rejections") {
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"version": 2})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"weights": {"bogus": 1}})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"weights": {"offroad_indication": 0}})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"histogram_scope": "global"})")), Error);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"histograms": {"linear_speed": {"bins": 1}}})")), Error);
  }
}

TEST_CASE("fixtures round trip", "[io]") {
  const auto out = generate({SynthTemplate::OffroadDrift, 3, 2, 0.0});
  const auto back = fixture_from_json(json::parse(to_json(out.fixture).dump()));
  CHECK(back.scenario_id == out.fixture.scenario_id);
  REQUIRE(back.expected.size() == out.fixture.expected.size());
  for (const auto& [id, metrics] : out.fixture.expected)
    for (const auto& [m, series] : metrics) {
      CHECK(back.expected.at(id).at(m).values == series.values);
      CHECK(back.expected.at(id).at(m).valid == series.valid);
    }
}
