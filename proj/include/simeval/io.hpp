#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simeval/aggregation.hpp"
#include "simeval/errors.hpp"
#include "simeval/evaluation.hpp"
#include "simeval/scene.hpp"
#include "simeval/synth.hpp"

namespace simeval {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum class FileFormat { Json, Binary };

inline FileFormat format_for_path(const fs::path& p) {
  return p.extension() == ".bin" ? FileFormat::Binary : FileFormat::Json;
}

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

// ---------------------------------------------------------------------------
// JSON encoding

namespace detail {

template <class Enum, std::size_t N>
Enum enum_from(const std::string& s, const std::array<Enum, N>& all, const std::string& what) {
  for (Enum e : all)
    if (s == to_string(e)) return e;
  throw Error(ErrorCode::ParseError, "unknown " + what + " '" + s + "'");
}

inline constexpr std::array<ObjectType, 3> kObjectTypes = {ObjectType::Vehicle, ObjectType::Pedestrian,
                                                           ObjectType::Cyclist};
inline constexpr std::array<MapFeatureKind, 3> kFeatureKinds = {MapFeatureKind::RoadEdge, MapFeatureKind::LaneCenter,
                                                                MapFeatureKind::Other};

inline json states_to_json(const std::vector<ObjectState>& states) {
  json arr = json::array();
  for (const ObjectState& s : states) arr.push_back({s.x, s.y, s.z, s.heading, s.valid});
  return arr;
}

inline std::vector<ObjectState> states_from_json(const json& arr) {
  std::vector<ObjectState> out;
  out.reserve(arr.size());
  for (const json& e : arr) {
    if (!e.is_array() || e.size() != 5) throw Error(ErrorCode::ParseError, "state must be [x, y, z, heading, valid]");
    ObjectState s{e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>(), e[4].get<bool>()};
    if (std::isfinite(s.heading)) s.heading = normalize_heading(s.heading);
    out.push_back(s);
  }
  return out;
}

}  // namespace detail

inline json to_json(const Scenario& s) {
  json j;
  j["format"] = "simeval.scenario";
  j["version"] = kFormatVersion;
  j["scenario_id"] = s.scenario_id;
  j["timestep"] = s.timestep;
  j["history_length"] = s.history_length;
  j["future_length"] = s.future_length;
  j["av_track_id"] = s.av_track_id;
  j["tracks"] = json::array();
  for (const Track& t : s.tracks)
    j["tracks"].push_back({{"object_id", t.object_id},
                           {"object_type", to_string(t.object_type)},
                           {"length", t.length},
                           {"width", t.width},
                           {"height", t.height},
                           {"states", detail::states_to_json(t.states)}});
  j["map"] = json::array();
  for (const MapFeature& f : s.map) {
    json pts = json::array();
    for (Vec2 p : f.polyline) pts.push_back({p.x, p.y});
    j["map"].push_back({{"feature_id", f.feature_id}, {"kind", to_string(f.kind)}, {"polyline", pts}});
  }
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.scenario_id = j.at("scenario_id").get<std::string>();
  s.timestep = j.value("timestep", kDefaultTimestep);
  s.history_length = j.value("history_length", kDefaultHistoryLength);
  s.future_length = j.value("future_length", kDefaultFutureLength);
  s.av_track_id = j.at("av_track_id").get<ObjectId>();
  for (const json& t : j.at("tracks")) {
    Track tr;
    tr.object_id = t.at("object_id").get<ObjectId>();
    tr.object_type = detail::enum_from(t.at("object_type").get<std::string>(), detail::kObjectTypes, "object_type");
    tr.length = t.at("length").get<double>();
    tr.width = t.at("width").get<double>();
    tr.height = t.at("height").get<double>();
    tr.states = detail::states_from_json(t.at("states"));
    s.tracks.push_back(std::move(tr));
  }
  for (const json& f : j.value("map", json::array())) {
    MapFeature mf;
    mf.feature_id = f.at("feature_id").get<std::int64_t>();
    mf.kind = detail::enum_from(f.at("kind").get<std::string>(), detail::kFeatureKinds, "map feature kind");
    for (const json& p : f.at("polyline")) mf.polyline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    s.map.push_back(std::move(mf));
  }
  return s;
}

inline json to_json(const JointScene& r) {
  json traj = json::object();
  for (const auto& [id, states] : r.trajectories) traj[std::to_string(id)] = detail::states_to_json(states);
  return {{"scenario_id", r.scenario_id}, {"trajectories", traj}};
}

inline JointScene joint_scene_from_json(const json& j) {
  JointScene r;
  r.scenario_id = j.at("scenario_id").get<std::string>();
  for (const auto& [key, states] : j.at("trajectories").items())
    r.trajectories.emplace(std::stoll(key), detail::states_from_json(states));
  return r;
}

inline json to_json(const ScenarioRollouts& sr) {
  json arr = json::array();
  for (const JointScene& r : sr.rollouts) arr.push_back(to_json(r));
  return {{"format", "simeval.rollouts"}, {"version", kFormatVersion}, {"scenario_id", sr.scenario_id}, {"rollouts", arr}};
}

inline ScenarioRollouts rollouts_from_json(const json& j) {
  ScenarioRollouts sr;
  sr.scenario_id = j.at("scenario_id").get<std::string>();
  for (const json& r : j.at("rollouts")) sr.rollouts.push_back(joint_scene_from_json(r));
  return sr;
}

// ---------------------------------------------------------------------------
// Binary encoding: "SEVB", a version byte, then records of
// [u8 kind][u64 payload length][payload], all little-endian.

inline constexpr std::array<char, 4> kBinaryMagic = {'S', 'E', 'V', 'B'};

enum class RecordKind : std::uint8_t { Scenario = 1, ScenarioRollouts = 2 };

class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void bytes(std::string_view b) { buf_.append(b); }
  void state(const ObjectState& s) {
    f64(s.x);
    f64(s.y);
    f64(s.z);
    f64(s.heading);
    u8(s.valid ? 1 : 0);
  }
  std::size_t size() const { return buf_.size(); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  BinaryReader(std::string_view data, std::string path, std::uint64_t base = 0)
      : data_(data), path_(std::move(path)), base_(base) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = count(1);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view take(std::uint64_t n) {
    need(n);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  // Element count for a sequence of `elem_size`-byte items, bounds-checked.
  std::uint64_t count(std::uint64_t elem_size) {
    const std::uint64_t at = offset();
    const std::uint64_t n = u64();
    if (elem_size > 0 && n > remaining() / elem_size) fail(at, "length " + std::to_string(n) + " exceeds data");
    return n;
  }
  ObjectState state() {
    ObjectState s;
    s.x = f64();
    s.y = f64();
    s.z = f64();
    s.heading = f64();
    const std::uint8_t v = u8();
    if (v > 1) fail(offset() - 1, "bad validity byte");
    s.valid = v == 1;
    if (std::isfinite(s.heading)) s.heading = normalize_heading(s.heading);
    return s;
  }

  bool done() const { return pos_ >= data_.size(); }
  std::uint64_t remaining() const { return data_.size() - pos_; }
  std::uint64_t offset() const { return base_ + pos_; }
  [[noreturn]] void fail(std::uint64_t at, const std::string& msg) const { throw ParseError(path_, at, msg); }
  const std::string& path() const { return path_; }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) fail(offset(), "truncated: need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()));
  }

  std::string_view data_;
  std::string path_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

namespace detail {

constexpr std::uint64_t kStateBytes = 4 * 8 + 1;

inline void encode(BinaryWriter& w, const Scenario& s) {
  w.str(s.scenario_id);
  w.f64(s.timestep);
  w.u64(s.history_length);
  w.u64(s.future_length);
  w.i64(s.av_track_id);
  w.u64(s.tracks.size());
  for (const Track& t : s.tracks) {
    w.i64(t.object_id);
    w.u8(static_cast<std::uint8_t>(t.object_type));
    w.f64(t.length);
    w.f64(t.width);
    w.f64(t.height);
    w.u64(t.states.size());
    for (const ObjectState& st : t.states) w.state(st);
  }
  w.u64(s.map.size());
  for (const MapFeature& f : s.map) {
    w.i64(f.feature_id);
    w.u8(static_cast<std::uint8_t>(f.kind));
    w.u64(f.polyline.size());
    for (Vec2 p : f.polyline) {
      w.f64(p.x);
      w.f64(p.y);
    }
  }
}

inline Scenario decode_scenario(BinaryReader& r) {
  Scenario s;
  s.scenario_id = r.str();
  s.timestep = r.f64();
  s.history_length = r.u64();
  s.future_length = r.u64();
  s.av_track_id = r.i64();
  const std::uint64_t ntracks = r.count(8 + 1 + 24 + 8);
  for (std::uint64_t i = 0; i < ntracks; ++i) {
    Track t;
    t.object_id = r.i64();
    const std::uint64_t at = r.offset();
    const std::uint8_t type = r.u8();
    if (type > 2) r.fail(at, "bad object type " + std::to_string(type));
    t.object_type = static_cast<ObjectType>(type);
    t.length = r.f64();
    t.width = r.f64();
    t.height = r.f64();
    const std::uint64_t n = r.count(kStateBytes);
    t.states.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) t.states.push_back(r.state());
    s.tracks.push_back(std::move(t));
  }
  const std::uint64_t nmap = r.count(8 + 1 + 8);
  for (std::uint64_t i = 0; i < nmap; ++i) {
    MapFeature f;
    f.feature_id = r.i64();
    const std::uint64_t at = r.offset();
    const std::uint8_t kind = r.u8();
    if (kind > 2) r.fail(at, "bad map feature kind " + std::to_string(kind));
    f.kind = static_cast<MapFeatureKind>(kind);
    const std::uint64_t n = r.count(16);
    for (std::uint64_t k = 0; k < n; ++k) {
      const double x = r.f64();
      f.polyline.push_back({x, r.f64()});
    }
    s.map.push_back(std::move(f));
  }
  return s;
}

inline void encode(BinaryWriter& w, const ScenarioRollouts& sr) {
  w.str(sr.scenario_id);
  w.u64(sr.rollouts.size());
  for (const JointScene& r : sr.rollouts) {
    w.str(r.scenario_id);
    w.u64(r.trajectories.size());
    for (const auto& [id, states] : r.trajectories) {
      w.i64(id);
      w.u64(states.size());
      for (const ObjectState& s : states) w.state(s);
    }
  }
}

inline ScenarioRollouts decode_rollouts(BinaryReader& r) {
  ScenarioRollouts sr;
  sr.scenario_id = r.str();
  const std::uint64_t k = r.count(16);
  for (std::uint64_t i = 0; i < k; ++i) {
    JointScene js;
    js.scenario_id = r.str();
    const std::uint64_t n = r.count(16);
    for (std::uint64_t o = 0; o < n; ++o) {
      const ObjectId id = r.i64();
      const std::uint64_t steps = r.count(kStateBytes);
      std::vector<ObjectState> states;
      states.reserve(steps);
      for (std::uint64_t t = 0; t < steps; ++t) states.push_back(r.state());
      js.trajectories.emplace(id, std::move(states));
    }
    sr.rollouts.push_back(std::move(js));
  }
  return sr;
}

template <class T>
void append_record(BinaryWriter& file, RecordKind kind, const T& value) {
  BinaryWriter payload;
  encode(payload, value);
  file.u8(static_cast<std::uint8_t>(kind));
  file.u64(payload.size());
  file.bytes(payload.data());
}

inline BinaryWriter binary_file_header() {
  BinaryWriter w;
  w.bytes(std::string_view(kBinaryMagic.data(), kBinaryMagic.size()));
  w.u8(static_cast<std::uint8_t>(kFormatVersion));
  return w;
}

// Calls `on_record(kind, reader)` for each record; the reader is scoped to
// the record payload and must be consumed exactly.
template <class F>
void for_each_record(std::string_view data, const std::string& path, F&& on_record) {
  BinaryReader file(data, path);
  const auto magic = file.take(4);
  if (magic != std::string_view(kBinaryMagic.data(), kBinaryMagic.size())) file.fail(0, "bad magic");
  const std::uint8_t version = file.u8();
  if (version != kFormatVersion) file.fail(4, "unsupported format version " + std::to_string(version));
  while (!file.done()) {
    const std::uint64_t at = file.offset();
    const auto kind = static_cast<RecordKind>(file.u8());
    const std::uint64_t len = file.u64();
    if (len > file.remaining()) file.fail(at, "record length " + std::to_string(len) + " exceeds file");
    const std::uint64_t base = file.offset();
    BinaryReader rec(file.take(len), path, base);
    on_record(kind, rec, at);
    if (!rec.done()) rec.fail(rec.offset(), "trailing bytes in record");
  }
}

}  // namespace detail

inline std::string encode_scenario_binary(const Scenario& s) {
  BinaryWriter w = detail::binary_file_header();
  detail::append_record(w, RecordKind::Scenario, s);
  return w.data();
}

inline Scenario decode_scenario_binary(std::string_view data, const std::string& path = "<memory>") {
  std::optional<Scenario> out;
  detail::for_each_record(data, path, [&](RecordKind kind, BinaryReader& r, std::uint64_t at) {
    if (kind != RecordKind::Scenario) r.fail(at, "expected a scenario record");
    if (out) r.fail(at, "more than one scenario record");
    out = detail::decode_scenario(r);
  });
  if (!out) throw ParseError(path, data.size(), "no scenario record");
  return *out;
}

inline std::string encode_rollouts_binary(const std::vector<ScenarioRollouts>& records) {
  BinaryWriter w = detail::binary_file_header();
  for (const ScenarioRollouts& sr : records) detail::append_record(w, RecordKind::ScenarioRollouts, sr);
  return w.data();
}

inline std::vector<ScenarioRollouts> decode_rollouts_binary(std::string_view data,
                                                            const std::string& path = "<memory>") {
  std::vector<ScenarioRollouts> out;
  detail::for_each_record(data, path, [&](RecordKind kind, BinaryReader& r, std::uint64_t at) {
    if (kind != RecordKind::ScenarioRollouts) r.fail(at, "expected a rollouts record");
    out.push_back(detail::decode_rollouts(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Scenario / rollout files

namespace detail {

template <class F>
auto parse_json_file(const fs::path& path, F&& convert) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.byte, e.what());
  }
  try {
    return convert(j);
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw ParseError(path.string(), 0, e.what());
    throw;
  }
}

}  // namespace detail

inline void write_scenario(const fs::path& path, const Scenario& s, std::optional<FileFormat> format = {}) {
  const FileFormat f = format.value_or(format_for_path(path));
  write_file(path, f == FileFormat::Binary ? encode_scenario_binary(s) : to_json(s).dump(1));
}

inline Scenario read_scenario(const fs::path& path, std::optional<FileFormat> format = {}) {
  const FileFormat f = format.value_or(format_for_path(path));
  Scenario s = f == FileFormat::Binary
                   ? decode_scenario_binary(read_file(path), path.string())
                   : detail::parse_json_file(path, [](const json& j) { return scenario_from_json(j); });
  validate_scenario(s);
  return s;
}

inline void write_rollouts(const fs::path& path, const std::vector<ScenarioRollouts>& records,
                           std::optional<FileFormat> format = {}) {
  const FileFormat f = format.value_or(format_for_path(path));
  if (f == FileFormat::Binary) {
    write_file(path, encode_rollouts_binary(records));
    return;
  }
  json arr = json::array();
  for (const ScenarioRollouts& r : records) arr.push_back(to_json(r));
  write_file(path, arr.dump());
}

inline std::vector<ScenarioRollouts> read_rollouts(const fs::path& path, std::optional<FileFormat> format = {}) {
  const FileFormat f = format.value_or(format_for_path(path));
  if (f == FileFormat::Binary) return decode_rollouts_binary(read_file(path), path.string());
  return detail::parse_json_file(path, [](const json& j) {
    std::vector<ScenarioRollouts> out;
    for (const json& r : j) out.push_back(rollouts_from_json(r));
    return out;
  });
}

inline bool is_scenario_file(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.ends_with(".scenario.json") || name.ends_with(".scenario.bin");
}

// Every *.scenario.json / *.scenario.bin in `dir`, ordered by file name.
inline std::vector<Scenario> read_scenario_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_scenario_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(read_scenario(f));
  return out;
}

// ---------------------------------------------------------------------------
// Fixtures

inline json to_json(const SynthFixture& f) {
  json objects = json::object();
  for (const auto& [id, metrics] : f.expected) {
    json m = json::object();
    for (const auto& [kind, series] : metrics) {
      json valid = json::array();
      for (bool v : series.valid) valid.push_back(v);
      m[std::string(metric_name(kind))] = {{"values", series.values}, {"valid", valid}};
    }
    objects[std::to_string(id)] = m;
  }
  return {{"format", "simeval.fixture"}, {"version", kFormatVersion}, {"scenario_id", f.scenario_id}, {"objects", objects}};
}

inline SynthFixture fixture_from_json(const json& j) {
  SynthFixture f;
  f.scenario_id = j.at("scenario_id").get<std::string>();
  for (const auto& [key, metrics] : j.at("objects").items()) {
    const ObjectId id = std::stoll(key);
    for (const auto& [name, s] : metrics.items()) {
      const auto kind = metric_from_name(name);
      if (!kind) throw Error(ErrorCode::ParseError, "unknown metric '" + name + "'");
      FeatureSeries series{id, *kind, s.at("values").get<std::vector<double>>(), {}};
      for (const json& v : s.at("valid")) series.valid.push_back(v.get<bool>());
      f.expected[id][*kind] = std::move(series);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Evaluation config

inline double round_to_12_digits(double v) { return std::round(v * 1e12) / 1e12; }

inline const char* to_string(HistogramScope s) { return s == HistogramScope::PerObject ? "per_object" : "per_scenario"; }
inline const char* to_string(ObjectAggregation a) { return a == ObjectAggregation::LogMean ? "log_mean" : "linear_mean"; }

inline json to_json(const EvalConfig& c) {
  json weights = json::object();
  json hists = json::object();
  for (MetricKind m : kAllMetrics) {
    const std::string name(metric_name(m));
    weights[name] = round_to_12_digits(c.weights[m]);
    const HistogramSpec& h = c.histograms[index_of(m)];
    hists[name] = {{"min", h.min}, {"max", h.max}, {"bins", h.bins}, {"pseudocount", h.pseudocount}};
  }
  return {{"format", "simeval.config"},
          {"version", c.version},
          {"weights", weights},
          {"histograms", hists},
          {"ttc",
           {{"ttc_max", c.ttc.ttc_max},
            {"heading_threshold", c.ttc.heading_threshold},
            {"min_lateral_threshold", c.ttc.min_lateral_threshold},
            {"min_closing_speed", c.ttc.min_closing_speed}}},
          {"histogram_scope", to_string(c.histogram_scope)},
          {"object_aggregation", to_string(c.object_aggregation)}};
}

// Fields absent from the document keep their defaults. Weights are rescaled
// to sum to one.
inline EvalConfig config_from_json(const json& j) {
  EvalConfig c;
  c.version = j.value("version", 1);
  if (c.version != 1) throw Error(ErrorCode::ParseError, "unsupported config version " + std::to_string(c.version));
  std::array<double, kNumMetrics> raw = c.weights.values();
  if (j.contains("weights")) {
    for (const auto& [name, w] : j.at("weights").items()) {
      const auto m = metric_from_name(name);
      if (!m) throw Error(ErrorCode::ParseError, "unknown metric '" + name + "' in weights");
      raw[index_of(*m)] = w.get<double>();
    }
  }
  c.weights = MetricWeights::normalized(raw);
  const double pseudocount = j.value("pseudocount", kDefaultPseudocount);
  for (HistogramSpec& h : c.histograms) h.pseudocount = pseudocount;
  if (j.contains("histograms")) {
    for (const auto& [name, h] : j.at("histograms").items()) {
      const auto m = metric_from_name(name);
      if (!m) throw Error(ErrorCode::ParseError, "unknown metric '" + name + "' in histograms");
      HistogramSpec& spec = c.histograms[index_of(*m)];
      spec.min = h.value("min", spec.min);
      spec.max = h.value("max", spec.max);
      spec.bins = h.value("bins", spec.bins);
      spec.pseudocount = h.value("pseudocount", spec.pseudocount);
      spec.validate();
    }
  }
  if (j.contains("ttc")) {
    const json& t = j.at("ttc");
    c.ttc.ttc_max = t.value("ttc_max", c.ttc.ttc_max);
    c.ttc.heading_threshold = t.value("heading_threshold", c.ttc.heading_threshold);
    c.ttc.min_lateral_threshold = t.value("min_lateral_threshold", c.ttc.min_lateral_threshold);
    c.ttc.min_closing_speed = t.value("min_closing_speed", c.ttc.min_closing_speed);
  }
  const std::string scope = j.value("histogram_scope", std::string("per_object"));
  if (scope == "per_object") c.histogram_scope = HistogramScope::PerObject;
  else if (scope == "per_scenario") c.histogram_scope = HistogramScope::PerScenario;
  else throw Error(ErrorCode::ParseError, "unknown histogram_scope '" + scope + "'");
  const std::string agg = j.value("object_aggregation", std::string("log_mean"));
  if (agg == "log_mean") c.object_aggregation = ObjectAggregation::LogMean;
  else if (agg == "linear_mean") c.object_aggregation = ObjectAggregation::LinearMean;
  else throw Error(ErrorCode::ParseError, "unknown object_aggregation '" + agg + "'");
  return c;
}

inline EvalConfig read_config(const fs::path& path) {
  return detail::parse_json_file(path, [](const json& j) { return config_from_json(j); });
}

// ---------------------------------------------------------------------------
// Submission archives: shards named rollouts.<index>-of-<total>.bin plus a
// manifest.json, stored as a directory or a single .tar.gz.

struct SubmissionManifest {
  std::string submitter = "simeval";
  std::string av_policy;
  std::string env_policy;
  std::size_t replan_interval = 1;
  std::size_t rollouts_per_scenario = kRolloutsPerScenario;
  std::uint64_t seed = 0;
  int format_version = kFormatVersion;

  friend bool operator==(const SubmissionManifest&, const SubmissionManifest&) = default;
};

struct SubmissionArchive {
  SubmissionManifest manifest;
  std::vector<std::vector<ScenarioRollouts>> shards;
};

inline std::string shard_name(std::size_t index, std::size_t total) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "rollouts.%05zu-of-%05zu.bin", index, total);
  return buf;
}

// Splits records into `shard_count` contiguous shards (at least one record
// per shard).
inline std::vector<std::vector<ScenarioRollouts>> make_shards(std::vector<ScenarioRollouts> records,
                                                              std::size_t shard_count) {
  shard_count = std::clamp<std::size_t>(shard_count, 1, std::max<std::size_t>(records.size(), 1));
  std::vector<std::vector<ScenarioRollouts>> shards(shard_count);
  const std::size_t per = (records.size() + shard_count - 1) / shard_count;
  for (std::size_t i = 0; i < records.size(); ++i) shards[std::min(i / std::max<std::size_t>(per, 1), shard_count - 1)].push_back(std::move(records[i]));
  std::erase_if(shards, [](const auto& s) { return s.empty(); });
  if (shards.empty()) shards.emplace_back();
  return shards;
}

inline json to_json(const SubmissionManifest& m) {
  return {{"format", "simeval.submission"},
          {"format_version", m.format_version},
          {"submitter", m.submitter},
          {"av_policy", m.av_policy},
          {"env_policy", m.env_policy},
          {"replan_interval", m.replan_interval},
          {"rollouts_per_scenario", m.rollouts_per_scenario},
          {"seed", m.seed}};
}

inline SubmissionManifest manifest_from_json(const json& j) {
  SubmissionManifest m;
  m.format_version = j.value("format_version", kFormatVersion);
  m.submitter = j.value("submitter", m.submitter);
  m.av_policy = j.value("av_policy", std::string());
  m.env_policy = j.value("env_policy", std::string());
  m.replan_interval = j.value("replan_interval", std::size_t{1});
  m.rollouts_per_scenario = j.value("rollouts_per_scenario", kRolloutsPerScenario);
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

namespace detail {

struct TarEntry {
  std::string name;
  std::string data;
};

inline void tar_octal(char* field, std::size_t width, std::uint64_t value) {
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

// POSIX ustar with fixed metadata so archives are byte-reproducible.
inline std::string tar_pack(const std::vector<TarEntry>& entries) {
  std::string out;
  for (const TarEntry& e : entries) {
    if (e.name.size() >= 100) throw Error(ErrorCode::InvalidArgument, "tar entry name too long: " + e.name);
    std::array<char, 512> h{};
    std::memcpy(h.data(), e.name.data(), e.name.size());
    tar_octal(h.data() + 100, 8, 0644);
    tar_octal(h.data() + 108, 8, 0);
    tar_octal(h.data() + 116, 8, 0);
    tar_octal(h.data() + 124, 12, e.data.size());
    tar_octal(h.data() + 136, 12, 0);
    std::memset(h.data() + 148, ' ', 8);
    h[156] = '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    std::snprintf(h.data() + 148, 8, "%06o", sum);
    h[155] = ' ';
    out.append(h.data(), h.size());
    out.append(e.data);
    out.append((512 - e.data.size() % 512) % 512, '\0');
  }
  out.append(1024, '\0');
  return out;
}

inline std::vector<TarEntry> tar_unpack(std::string_view data, const std::string& path) {
  std::vector<TarEntry> out;
  std::size_t pos = 0;
  while (pos + 512 <= data.size()) {
    const std::string_view h = data.substr(pos, 512);
    if (std::all_of(h.begin(), h.end(), [](char c) { return c == '\0'; })) break;
    std::string name(h.substr(0, 100).data(), strnlen(h.data(), 100));
    std::string prefix(h.substr(345, 155).data(), strnlen(h.data() + 345, 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    const std::string size_field(h.substr(124, 12).data(), strnlen(h.data() + 124, 12));
    std::uint64_t size = 0;
    try {
      size = std::stoull(size_field, nullptr, 8);
    } catch (const std::exception&) {
      throw ParseError(path, pos, "bad tar size field");
    }
    const char type = h[156];
    pos += 512;
    if (pos + size > data.size()) throw ParseError(path, pos, "truncated tar entry " + name);
    if (type == '0' || type == '\0') out.push_back({name, std::string(data.substr(pos, size))});
    pos += (size + 511) / 512 * 512;
  }
  return out;
}

inline void gzip_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  gzFile f = gzopen(path.string().c_str(), "wb9");
  if (f == nullptr) throw Error(ErrorCode::Io, "cannot write " + path.string());
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - off, 1u << 20));
    if (gzwrite(f, bytes.data() + off, chunk) != static_cast<int>(chunk)) {
      gzclose(f);
      throw Error(ErrorCode::Io, "gzip write failed for " + path.string());
    }
    off += chunk;
  }
  if (gzclose(f) != Z_OK) throw Error(ErrorCode::Io, "gzip close failed for " + path.string());
}

inline std::string gzip_read(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string out;
  std::array<char, 1 << 16> buf;
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.append(buf.data(), static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(f, &err);
  const std::string what = msg ? msg : "";
  gzclose(f);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) throw ParseError(path.string(), out.size(), "gzip: " + what);
  return out;
}

}  // namespace detail

inline bool is_tar_gz(const fs::path& p) { return p.string().ends_with(".tar.gz") || p.extension() == ".tgz"; }

inline void write_archive(const fs::path& path, const SubmissionArchive& archive) {
  std::vector<detail::TarEntry> entries;
  entries.push_back({"manifest.json", to_json(archive.manifest).dump(2)});
  for (std::size_t i = 0; i < archive.shards.size(); ++i)
    entries.push_back({shard_name(i, archive.shards.size()), encode_rollouts_binary(archive.shards[i])});
  if (is_tar_gz(path)) {
    detail::gzip_write(path, detail::tar_pack(entries));
    return;
  }
  fs::create_directories(path);
  for (const auto& e : entries) write_file(path / e.name, e.data);
}

inline SubmissionArchive read_archive(const fs::path& path) {
  std::vector<detail::TarEntry> entries;
  if (is_tar_gz(path)) {
    entries = detail::tar_unpack(detail::gzip_read(path), path.string());
  } else {
    if (!fs::is_directory(path)) throw Error(ErrorCode::Io, path.string() + " is neither a directory nor a .tar.gz");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) entries.push_back({f.filename().string(), read_file(f)});
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  SubmissionArchive out;
  bool has_manifest = false;
  for (const auto& e : entries) {
    const std::string base = fs::path(e.name).filename().string();
    if (base == "manifest.json") {
      try {
        out.manifest = manifest_from_json(json::parse(e.data));
      } catch (const json::exception& ex) {
        throw ParseError(path.string() + ":" + e.name, 0, ex.what());
      }
      has_manifest = true;
    } else if (base.starts_with("rollouts.") && base.ends_with(".bin")) {
      out.shards.push_back(decode_rollouts_binary(e.data, path.string() + ":" + e.name));
    }
  }
  if (!has_manifest) throw ParseError(path.string(), 0, "archive has no manifest.json");
  return out;
}

// ---------------------------------------------------------------------------
// Submission validation

struct Violation {
  std::string code;
  std::string scenario_id;
  std::string detail;
  std::vector<ObjectId> object_ids;
};

struct ValidationReport {
  std::size_t scenarios_checked = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view code) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
  }
};

inline ValidationReport validate_submission(const SubmissionArchive& archive, std::span<const Scenario> scenarios) {
  ValidationReport rep;
  std::map<std::string, const Scenario*> by_id;
  for (const Scenario& s : scenarios) by_id[s.scenario_id] = &s;
  std::set<std::string> seen;
  auto add = [&](std::string code, const std::string& sid, std::string detail, std::vector<ObjectId> ids = {}) {
    rep.violations.push_back({std::move(code), sid, std::move(detail), std::move(ids)});
  };

  for (std::size_t shard = 0; shard < archive.shards.size(); ++shard) {
    for (const ScenarioRollouts& sr : archive.shards[shard]) {
      ++rep.scenarios_checked;
      if (!seen.insert(sr.scenario_id).second) {
        add("DUPLICATE_SCENARIO", sr.scenario_id, "appears again in shard " + std::to_string(shard));
        continue;
      }
      auto it = by_id.find(sr.scenario_id);
      if (it == by_id.end()) {
        add("UNKNOWN_SCENARIO", sr.scenario_id, "no such scenario");
        continue;
      }
      const Scenario& sc = *it->second;
      if (sr.rollouts.size() != kRolloutsPerScenario)
        add("BAD_ROLLOUT_COUNT", sr.scenario_id,
            std::to_string(sr.rollouts.size()) + " rollouts, expected " + std::to_string(kRolloutsPerScenario));
      std::set<ObjectId> required;
      try {
        required = simulated_object_ids(strip_late_spawns(sc));
      } catch (const Error& e) {
        add("MALFORMED_SCENARIO", sr.scenario_id, e.what());
        continue;
      }
      for (std::size_t k = 0; k < sr.rollouts.size(); ++k) {
        const JointScene& r = sr.rollouts[k];
        const std::string where = "rollout " + std::to_string(k);
        if (r.scenario_id != sr.scenario_id)
          add("SCENARIO_ID_MISMATCH", sr.scenario_id, where + " is labelled '" + r.scenario_id + "'");
        std::vector<ObjectId> missing, extra, bad_steps, invalid, non_finite;
        for (ObjectId id : required)
          if (!r.trajectories.contains(id)) missing.push_back(id);
        for (const auto& [id, states] : r.trajectories) {
          if (!required.contains(id)) extra.push_back(id);
          if (states.size() != sc.future_length) bad_steps.push_back(id);
          bool any_invalid = false, any_non_finite = false;
          for (const ObjectState& s : states) {
            if (!s.valid) any_invalid = true;
            if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.z) || !std::isfinite(s.heading))
              any_non_finite = true;
          }
          if (any_invalid) invalid.push_back(id);
          if (any_non_finite) non_finite.push_back(id);
        }
        if (!missing.empty()) add("MISSING_OBJECT", sr.scenario_id, where, missing);
        if (!extra.empty()) add("EXTRA_OBJECT", sr.scenario_id, where, extra);
        if (!bad_steps.empty())
          add("BAD_STEP_COUNT", sr.scenario_id, where + ": expected " + std::to_string(sc.future_length) + " steps",
              bad_steps);
        if (!invalid.empty()) add("INVALID_STATE", sr.scenario_id, where, invalid);
        if (!non_finite.empty()) add("NON_FINITE", sr.scenario_id, where, non_finite);
      }
    }
  }
  for (const Scenario& s : scenarios)
    if (!seen.contains(s.scenario_id)) add("MISSING_SCENARIO", s.scenario_id, "not in archive");
  return rep;
}

// ---------------------------------------------------------------------------
// Reports

struct DatasetSummary {
  std::size_t scenario_count = 0;
  double composite = 0.0;
  double ade = 0.0;
  double min_ade = 0.0;
  ComponentArray component;  // mean over scenarios where scored
};

inline DatasetSummary summarize(std::span<const MetricsBundle> bundles) {
  DatasetSummary s;
  s.scenario_count = bundles.size();
  if (bundles.empty()) return s;
  s.composite = dataset_composite(bundles);
  std::array<double, kNumMetrics> sums{};
  std::array<std::size_t, kNumMetrics> counts{};
  for (const MetricsBundle& b : bundles) {
    s.ade += b.ade;
    s.min_ade += b.min_ade;
    for (MetricKind m : kAllMetrics)
      if (b.component[index_of(m)]) {
        sums[index_of(m)] += *b.component[index_of(m)];
        ++counts[index_of(m)];
      }
  }
  s.ade /= static_cast<double>(bundles.size());
  s.min_ade /= static_cast<double>(bundles.size());
  for (std::size_t i = 0; i < kNumMetrics; ++i)
    if (counts[i] > 0) s.component[i] = sums[i] / static_cast<double>(counts[i]);
  return s;
}

// Self-describing header written at the top of every report.
struct ReportHeader {
  EvalConfig config;
  std::string archive;
  SubmissionManifest manifest;
};

enum class ReportFormat { Json, Csv };

inline const std::string kDatasetRowId = "__dataset__";

inline std::string csv_header() {
  std::string h = "scenario_id";
  for (MetricKind m : kAllMetrics) h += "," + std::string(metric_name(m));
  return h + ",composite,ade,min_ade";
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_row(const std::string& id, const ComponentArray& c, double composite, double ade, double min_ade) {
  std::string row = id;
  for (const auto& v : c) row += "," + (v ? fmt_double(*v) : std::string());
  return row + "," + fmt_double(composite) + "," + fmt_double(ade) + "," + fmt_double(min_ade);
}

inline json components_json(const ComponentArray& c) {
  json out = json::object();
  for (MetricKind m : kAllMetrics) {
    const auto& v = c[index_of(m)];
    out[std::string(metric_name(m))] = v ? json(*v) : json(nullptr);
  }
  return out;
}

inline ComponentArray components_from_json(const json& j) {
  ComponentArray c;
  for (MetricKind m : kAllMetrics) {
    const std::string name(metric_name(m));
    if (j.contains(name) && !j.at(name).is_null()) c[index_of(m)] = j.at(name).get<double>();
  }
  return c;
}

}  // namespace detail

inline json to_json(const MetricsBundle& b) {
  json excluded = json::array();
  for (MetricKind m : b.excluded) excluded.push_back(std::string(metric_name(m)));
  return {{"scenario_id", b.scenario_id},
          {"components", detail::components_json(b.component)},
          {"excluded", excluded},
          {"composite", b.composite},
          {"ade", b.ade},
          {"min_ade", b.min_ade}};
}

inline MetricsBundle bundle_from_json(const json& j) {
  MetricsBundle b;
  b.scenario_id = j.at("scenario_id").get<std::string>();
  b.component = detail::components_from_json(j.at("components"));
  for (const json& e : j.value("excluded", json::array())) {
    const auto m = metric_from_name(e.get<std::string>());
    if (m) b.excluded.push_back(*m);
  }
  b.composite = j.at("composite").get<double>();
  b.ade = j.at("ade").get<double>();
  b.min_ade = j.at("min_ade").get<double>();
  return b;
}

inline json to_json(const DatasetSummary& s) {
  return {{"scenario_count", s.scenario_count},
          {"components", detail::components_json(s.component)},
          {"composite", s.composite},
          {"ade", s.ade},
          {"min_ade", s.min_ade}};
}

inline std::string render_report(std::span<const MetricsBundle> bundles, const std::optional<DatasetSummary>& summary,
                                 ReportFormat format, const ReportHeader& header = {}) {
  if (format == ReportFormat::Csv) {
    std::string out = csv_header() + "\n";
    for (const MetricsBundle& b : bundles) out += detail::csv_row(b.scenario_id, b.component, b.composite, b.ade, b.min_ade) + "\n";
    if (summary && !bundles.empty())
      out += detail::csv_row(kDatasetRowId, summary->component, summary->composite, summary->ade, summary->min_ade) + "\n";
    return out;
  }
  json scen = json::array();
  for (const MetricsBundle& b : bundles) scen.push_back(to_json(b));
  json j = {{"format", "simeval.report"},
            {"version", kFormatVersion},
            {"archive", header.archive},
            {"seed", header.manifest.seed},
            {"submission", to_json(header.manifest)},
            {"config", to_json(header.config)},
            {"scenarios", scen}};
  if (summary && !bundles.empty()) j["summary"] = to_json(*summary);
  return j.dump(2) + "\n";
}

inline void write_report(std::span<const MetricsBundle> bundles, const std::optional<DatasetSummary>& summary,
                         const fs::path& path, ReportFormat format, const ReportHeader& header = {}) {
  write_file(path, render_report(bundles, summary, format, header));
}

struct LoadedReport {
  std::string label;
  json header;
  std::vector<MetricsBundle> bundles;
  std::optional<DatasetSummary> summary;
};

inline LoadedReport read_report(const fs::path& path) {
  return detail::parse_json_file(path, [&](const json& j) {
    LoadedReport r;
    r.label = path.stem().string();
    r.header = j.value("submission", json::object());
    for (const json& b : j.at("scenarios")) r.bundles.push_back(bundle_from_json(b));
    if (j.contains("summary")) {
      const json& s = j.at("summary");
      DatasetSummary d;
      d.scenario_count = s.at("scenario_count").get<std::size_t>();
      d.component = detail::components_from_json(s.at("components"));
      d.composite = s.at("composite").get<double>();
      d.ade = s.at("ade").get<double>();
      d.min_ade = s.at("min_ade").get<double>();
      r.summary = d;
    }
    return r;
  });
}

}  // namespace simeval
