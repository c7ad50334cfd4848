// rsan/commands.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/commands.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "rsan/audio.h"
#include "rsan/framing.h"
#include "rsan/random.h"

namespace rsan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads the keys of one JSON object, remembering which were consumed so
// that leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw UsageError("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void Get(const std::string& key, T* out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      *out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: bad value for '" + Path(key) + "'");
    }
  }

  const json* Child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string Path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  void Finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw UsageError("config: unknown key '" + Path(item.key()) + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
void ParallelFor(size_t n, int jobs, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](size_t first, size_t stride) {
    for (size_t i = first; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t workers = std::min<size_t>(std::max(1, jobs), n);
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (size_t t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void MakeDirs(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("unwritable directory: " + dir);
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os << text;
  if (!os) throw Error("write failed: " + path);
}

std::string ReadText(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

json ReadJson(const std::string& path) {
  try {
    return json::parse(ReadText(path));
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + path + ": " + e.what());
  }
}

void EchoConfig(const ExperimentConfig& cfg, const std::string& dir) {
  WriteText((fs::path(dir) / "config.json").string(), ConfigToJson(cfg).dump(2) + "\n");
}

void Log(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string Relative(const std::string& path, const std::string& base) {
  return fs::path(path).lexically_relative(base).generic_string();
}

AudioSignal Mono(const AudioSignal& x) {
  AudioSignal m(x.sample_rate, x.length(), 1);
  m.channel(0) = x.channel(0);
  return m;
}

std::string SessionId(Profile p, size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "sim%s_%04zu", ProfileName(p).c_str(), i);
  return buf;
}

std::string SlotLabel(size_t k) { return "spk" + std::to_string(k); }

std::string SlotFile(size_t k) { return "slot" + std::to_string(k) + ".wav"; }

}  // namespace

double DefaultLength(Profile profile) {
  switch (profile) {
    case Profile::kA: return 10.0;
    case Profile::kB: return 60.0;
    case Profile::kDialog: return 20.0;
  }
  return 60.0;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::Validate() const {
  try {
    if (!fs::is_directory(paths.workdir))
      throw UsageError("workdir does not exist: " + paths.workdir);
    if (simulate.count < 0) throw UsageError("simulate.count must be non-negative");
    if (simulate.length < 0.0) throw UsageError("simulate.length must be non-negative");
    if (simulate.pool_size < 1) throw UsageError("simulate.pool_size must be positive");
    if (!simulate.clip_dir.empty() && !fs::is_directory(Resolve(simulate.clip_dir)))
      throw UsageError("clip_dir does not exist: " + simulate.clip_dir);
    ValidateStftConfig(stft);
    BlockLayout layout{simulate.sim.sample_rate, train.block_len, stft};
    layout.Validate();
    layout.block_len = decode.block_len;
    layout.Validate();
    train.Validate();
    decode.Validate();
    vad.Validate();
    for (const auto& s : curriculum)
      if (s.epochs < 0) throw UsageError("curriculum stage '" + s.name + "' has negative epochs");
    if (!resume.empty() && !fs::is_regular_file(Resolve(resume)))
      throw UsageError("resume checkpoint does not exist: " + resume);
    if (!(der_resolution > 0.0)) throw UsageError("der_resolution must be positive");
    if (!(fault_keep >= 0.0 && fault_keep < 1.0)) throw UsageError("fault_keep must be in [0, 1)");
    if (fault_block >= 0 && !oracle) throw UsageError("fault injection needs oracle mode");
    if (jobs < 1) throw UsageError("jobs must be at least 1");
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::string ExperimentConfig::Resolve(const std::string& path) const {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(paths.workdir) / path).lexically_normal().string();
}

ExperimentConfig ConfigFromJson(const json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "");
  if (const json* p = root.Child("paths")) {
    ObjectReader r(*p, "paths");
    r.Get("workdir", &c.paths.workdir);
    r.Get("data", &c.paths.data);
    r.Get("checkpoints", &c.paths.checkpoints);
    r.Get("outputs", &c.paths.outputs);
    r.Finish();
  }
  if (const json* p = root.Child("simulate")) {
    ObjectReader r(*p, "simulate");
    std::string profile = ProfileName(c.simulate.profile);
    r.Get("profile", &profile);
    try {
      c.simulate.profile = ParseProfile(profile);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    r.Get("count", &c.simulate.count);
    r.Get("length", &c.simulate.length);
    r.Get("seed", &c.simulate.seed);
    r.Get("pool_size", &c.simulate.pool_size);
    r.Get("pool_seed", &c.simulate.pool_seed);
    r.Get("clip_dir", &c.simulate.clip_dir);
    SimConfig& s = c.simulate.sim;
    r.Get("sample_rate", &s.sample_rate);
    r.Get("snr_min_db", &s.snr_min_db);
    r.Get("snr_max_db", &s.snr_max_db);
    r.Get("rt60_min", &s.rt60_min);
    r.Get("rt60_max", &s.rt60_max);
    r.Get("utt_min", &s.utt_min);
    r.Get("utt_max", &s.utt_max);
    r.Get("gap_min", &s.gap_min);
    r.Get("gap_max", &s.gap_max);
    r.Get("overlap_fraction", &s.overlap_fraction);
    r.Get("entry_grid", &s.entry_grid);
    r.Get("newcomer_min_turn", &s.newcomer_min_turn);
    r.Get("max_mic_delay", &s.max_mic_delay);
    r.Get("drr_db", &s.drr_db);
    r.Get("speech_rms", &s.speech_rms);
    r.Finish();
  }
  if (const json* p = root.Child("stft")) {
    ObjectReader r(*p, "stft");
    r.Get("window_len", &c.stft.window_len);
    r.Get("hop", &c.stft.hop);
    std::string window = WindowName(c.stft.window);
    r.Get("window", &window);
    try {
      c.stft.window = ParseWindow(window);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    r.Finish();
  }
  if (const json* p = root.Child("model")) {
    ObjectReader r(*p, "model");
    r.Get("emb_dim", &c.model.emb_dim);
    r.Get("hidden", &c.model.hidden);
    r.Get("proj", &c.model.proj);
    r.Finish();
  }
  if (const json* p = root.Child("train")) {
    ObjectReader r(*p, "train");
    TrainConfig& t = c.train;
    r.Get("block_len", &t.block_len);
    r.Get("max_blocks", &t.max_blocks);
    r.Get("max_speakers", &t.max_speakers);
    r.Get("learning_rate", &t.learning_rate);
    r.Get("beta1", &t.beta1);
    r.Get("beta2", &t.beta2);
    r.Get("adam_eps", &t.adam_eps);
    r.Get("epochs", &t.epochs);
    r.Get("accumulation", &t.accumulation);
    r.Get("clip_norm", &t.clip_norm);
    r.Get("alpha", &t.weights.alpha);
    r.Get("beta", &t.weights.beta);
    r.Get("delta", &t.weights.delta);
    r.Get("teacher_forcing", &t.teacher_forcing);
    r.Get("seed", &t.seed);
    r.Get("min_activity", &t.min_activity);
    r.Get("manifest", &c.train_manifest);
    r.Get("resume", &c.resume);
    if (const json* cur = r.Child("curriculum")) {
      if (!cur->is_array()) throw UsageError("config: 'train.curriculum' must be an array");
      for (size_t i = 0; i < cur->size(); ++i) {
        ObjectReader s((*cur)[i], "train.curriculum[" + std::to_string(i) + "]");
        CurriculumStage stage;
        stage.name = "stage" + std::to_string(i + 1);
        s.Get("name", &stage.name);
        s.Get("manifest", &stage.manifest);
        s.Get("epochs", &stage.epochs);
        s.Finish();
        if (stage.manifest.empty())
          throw UsageError("config: curriculum stage '" + stage.name + "' needs a manifest");
        c.curriculum.push_back(stage);
      }
    }
    r.Finish();
  }
  if (const json* p = root.Child("decode")) {
    ObjectReader r(*p, "decode");
    DecoderConfig& d = c.decode;
    r.Get("t_resmask", &d.t_resmask);
    r.Get("t_silent", &d.t_silent);
    r.Get("block_len", &d.block_len);
    r.Get("max_iterations", &d.max_iterations);
    r.Get("consistency_check", &d.consistency_check);
    r.Get("t_consistency", &d.t_consistency);
    r.Get("checkpoint", &c.checkpoint);
    r.Get("oracle", &c.oracle);
    r.Get("fault_block", &c.fault_block);
    r.Get("fault_speaker", &c.fault_speaker);
    r.Get("fault_keep", &c.fault_keep);
    r.Finish();
  }
  if (const json* p = root.Child("score")) {
    ObjectReader r(*p, "score");
    r.Get("vad_frame", &c.vad.frame);
    r.Get("vad_min_dur", &c.vad.min_dur);
    r.Get("vad_relative_db", &c.vad.relative_db);
    r.Get("der_resolution", &c.der_resolution);
    r.Get("min_activity", &c.min_activity);
    r.Get("spectrograms", &c.spectrograms);
    r.Finish();
  }
  root.Get("jobs", &c.jobs);
  root.Finish();
  c.model.bins = c.stft.bins();
  c.train.jobs = c.jobs;
  return c;
}

json ConfigToJson(const ExperimentConfig& c) {
  json j;
  j["paths"] = {{"workdir", c.paths.workdir},
                {"data", c.paths.data},
                {"checkpoints", c.paths.checkpoints},
                {"outputs", c.paths.outputs}};
  const SimConfig& s = c.simulate.sim;
  j["simulate"] = {{"profile", ProfileName(c.simulate.profile)},
                   {"count", c.simulate.count},
                   {"length", c.simulate.length},
                   {"seed", c.simulate.seed},
                   {"pool_size", c.simulate.pool_size},
                   {"pool_seed", c.simulate.pool_seed},
                   {"clip_dir", c.simulate.clip_dir},
                   {"sample_rate", s.sample_rate},
                   {"snr_min_db", s.snr_min_db},
                   {"snr_max_db", s.snr_max_db},
                   {"rt60_min", s.rt60_min},
                   {"rt60_max", s.rt60_max},
                   {"utt_min", s.utt_min},
                   {"utt_max", s.utt_max},
                   {"gap_min", s.gap_min},
                   {"gap_max", s.gap_max},
                   {"overlap_fraction", s.overlap_fraction},
                   {"entry_grid", s.entry_grid},
                   {"newcomer_min_turn", s.newcomer_min_turn},
                   {"max_mic_delay", s.max_mic_delay},
                   {"drr_db", s.drr_db},
                   {"speech_rms", s.speech_rms}};
  j["stft"] = {{"window_len", c.stft.window_len},
               {"hop", c.stft.hop},
               {"window", WindowName(c.stft.window)}};
  j["model"] = {{"emb_dim", c.model.emb_dim}, {"hidden", c.model.hidden}, {"proj", c.model.proj}};
  const TrainConfig& t = c.train;
  json cur = json::array();
  for (const auto& st : c.curriculum)
    cur.push_back({{"name", st.name}, {"manifest", st.manifest}, {"epochs", st.epochs}});
  j["train"] = {{"block_len", t.block_len},
                {"max_blocks", t.max_blocks},
                {"max_speakers", t.max_speakers},
                {"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"epochs", t.epochs},
                {"accumulation", t.accumulation},
                {"clip_norm", t.clip_norm},
                {"alpha", t.weights.alpha},
                {"beta", t.weights.beta},
                {"delta", t.weights.delta},
                {"teacher_forcing", t.teacher_forcing},
                {"seed", t.seed},
                {"min_activity", t.min_activity},
                {"manifest", c.train_manifest},
                {"resume", c.resume},
                {"curriculum", cur}};
  const DecoderConfig& d = c.decode;
  j["decode"] = {{"t_resmask", d.t_resmask},
                 {"t_silent", d.t_silent},
                 {"block_len", d.block_len},
                 {"max_iterations", d.max_iterations},
                 {"consistency_check", d.consistency_check},
                 {"t_consistency", d.t_consistency},
                 {"checkpoint", c.checkpoint},
                 {"oracle", c.oracle},
                 {"fault_block", c.fault_block},
                 {"fault_speaker", c.fault_speaker},
                 {"fault_keep", c.fault_keep}};
  j["score"] = {{"vad_frame", c.vad.frame},
                {"vad_min_dur", c.vad.min_dur},
                {"vad_relative_db", c.vad.relative_db},
                {"der_resolution", c.der_resolution},
                {"min_activity", c.min_activity},
                {"spectrograms", c.spectrograms}};
  j["jobs"] = c.jobs;
  return j;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
  ExperimentConfig c = ConfigFromJson(j);
  const fs::path base = fs::absolute(path).parent_path();
  if (fs::path(c.paths.workdir).is_relative())
    c.paths.workdir = (base / c.paths.workdir).lexically_normal().string();
  return c;
}

// ---------------------------------------------------------------------------
// Manifests

std::string FileChecksum(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(ReadText(path))));
  return buf;
}

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error("missing dataset manifest: " + path);
  const json j = ReadJson(path);
  const fs::path base = fs::absolute(path).parent_path();
  auto abs = [&](const json& v) { return (base / v.get<std::string>()).lexically_normal().string(); };
  std::vector<ManifestEntry> out;
  try {
    for (const auto& s : j.at("sessions")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.length = s.value("length", 0.0);
      e.mixture = abs(s.at("mixture"));
      if (s.contains("noise")) e.noise = abs(s.at("noise"));
      if (s.contains("rttm")) e.rttm = abs(s.at("rttm"));
      if (s.contains("scenario")) e.scenario = abs(s.at("scenario"));
      if (s.contains("references"))
        for (const auto& [spk, p] : s.at("references").items()) e.references[spk] = abs(p);
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error("malformed manifest " + path + ": " + e.what());
  }
  return out;
}

RenderedMeeting LoadMeeting(const ManifestEntry& entry) {
  if (entry.rttm.empty() || entry.noise.empty() || entry.references.empty())
    throw Error("session " + entry.id + " has no ground truth");
  RenderedMeeting m;
  m.mixture = ReadWav(entry.mixture);
  m.noise = ReadWav(entry.noise);
  for (const auto& [spk, p] : entry.references) {
    AudioSignal r = ReadWav(p);
    if (r.length() != m.mixture.length() || r.channels() != m.mixture.channels())
      throw Error("reference " + p + " does not match the mixture shape");
    m.references[spk] = std::move(r);
  }
  if (m.noise.length() != m.mixture.length() || m.noise.channels() != m.mixture.channels())
    throw Error("noise " + entry.noise + " does not match the mixture shape");
  const auto rttm = ReadRttm(entry.rttm);
  auto it = rttm.find(entry.id);
  if (it != rttm.end()) m.timeline = it->second;
  return m;
}

// ---------------------------------------------------------------------------
// simulate

void SimulateCommand(const ExperimentConfig& cfg, const std::string& out_dir, const LogFn& log) {
  cfg.Validate();
  MakeDirs(out_dir);
  const auto& sc = cfg.simulate;
  const std::vector<SourceSpec> pool = sc.clip_dir.empty()
                                           ? MakeSpeakerPool(sc.pool_size, sc.pool_seed)
                                           : LoadClipPool(cfg.Resolve(sc.clip_dir));
  const double length = sc.length > 0.0 ? sc.length : DefaultLength(sc.profile);
  std::vector<json> sessions(sc.count);
  ParallelFor(sessions.size(), cfg.jobs, [&](size_t i) {
    const std::string id = SessionId(sc.profile, i);
    const MeetingScenario scenario =
        SampleScenario(sc.profile, length, pool, MixSeed(sc.seed, i), sc.sim);
    const RenderedMeeting m = Render(scenario);
    const fs::path dir = fs::path(out_dir) / id;
    MakeDirs(dir.string());
    json entry = {{"id", id}, {"length", length}};
    json sums;
    auto record = [&](const std::string& key, const fs::path& p) {
      sums[key] = FileChecksum(p.string());
      return Relative(p.string(), out_dir);
    };
    WriteWav((dir / "mixture.wav").string(), m.mixture);
    entry["mixture"] = record("mixture", dir / "mixture.wav");
    WriteWav((dir / "noise.wav").string(), m.noise);
    entry["noise"] = record("noise", dir / "noise.wav");
    json refs = json::object();
    for (const auto& [spk, sig] : m.references) {
      const fs::path p = dir / ("ref_" + spk + ".wav");
      WriteWav(p.string(), sig);
      refs[spk] = record("ref_" + spk, p);
    }
    entry["references"] = refs;
    WriteRttm((dir / "ref.rttm").string(), m.timeline, id);
    entry["rttm"] = record("rttm", dir / "ref.rttm");
    WriteText((dir / "scenario.json").string(), ScenarioToJson(scenario).dump(2) + "\n");
    entry["scenario"] = record("scenario", dir / "scenario.json");
    entry["checksums"] = sums;
    sessions[i] = std::move(entry);
    Log(log, "simulated " + id);
  });
  json manifest = {{"profile", ProfileName(sc.profile)},
                   {"seed", sc.seed},
                   {"length", length},
                   {"sample_rate", sc.sim.sample_rate},
                   {"sessions", json::array()}};
  for (auto& s : sessions) manifest["sessions"].push_back(std::move(s));
  WriteText((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  EchoConfig(cfg, out_dir);
}

// ---------------------------------------------------------------------------
// train

namespace {

std::vector<TrainSample<float>> LoadTrainingSet(const ExperimentConfig& cfg,
                                                const std::string& manifest,
                                                const LogFn& log) {
  const std::vector<ManifestEntry> entries = ReadManifest(manifest);
  if (entries.empty()) throw Error("dataset " + manifest + " is empty");
  std::vector<std::vector<TrainSample<float>>> parts(entries.size());
  ParallelFor(entries.size(), cfg.jobs, [&](size_t i) {
    const RenderedMeeting m = LoadMeeting(entries[i]);
    BlockLayout layout{m.mixture.sample_rate, cfg.train.block_len, cfg.stft};
    parts[i] = MakeTrainSamples(m, entries[i].id, layout, cfg.train);
  });
  std::vector<TrainSample<float>> out;
  for (auto& p : parts)
    for (auto& s : p) out.push_back(std::move(s));
  Log(log, "loaded " + std::to_string(entries.size()) + " meetings (" +
               std::to_string(out.size()) + " excerpts) from " + manifest);
  return out;
}

std::string EpochCheckpointName(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03d.ckpt", epoch);
  return buf;
}

}  // namespace

void TrainCommand(const ExperimentConfig& cfg, const std::string& out_dir, const LogFn& log) {
  cfg.Validate();
  std::vector<CurriculumStage> plan = cfg.curriculum;
  if (plan.empty()) {
    const std::string manifest = cfg.train_manifest.empty()
                                     ? (fs::path(cfg.Resolve(cfg.paths.data)) / "manifest.json").string()
                                     : cfg.train_manifest;
    plan.push_back({"main", manifest, cfg.train.epochs});
  }
  for (auto& st : plan) {
    st.manifest = cfg.Resolve(st.manifest);
    if (!fs::is_regular_file(st.manifest)) throw Error("missing dataset: " + st.manifest);
  }
  MakeDirs(out_dir);

  NetShape shape = cfg.model;
  shape.bins = cfg.stft.bins();
  ModelParams<float> params = ModelParams<float>::Random(shape, cfg.train.seed);
  int start_epoch = 0;
  if (!cfg.resume.empty()) {
    Checkpoint ck = LoadCheckpoint(cfg.Resolve(cfg.resume));
    if (ck.stft.window_len != cfg.stft.window_len || ck.stft.hop != cfg.stft.hop ||
        ck.stft.window != cfg.stft.window)
      throw Error("resume checkpoint was trained with a different STFT");
    params = std::move(ck.params);
    start_epoch = static_cast<int>(ck.epoch);
    Log(log, "resuming after epoch " + std::to_string(start_epoch));
  }

  // Epochs already done are skipped from the front of the plan.
  int skip = start_epoch;
  std::vector<CurriculumStage> remaining;
  for (auto st : plan) {
    const int drop = std::min(skip, st.epochs);
    skip -= drop;
    st.epochs -= drop;
    if (st.epochs > 0) remaining.push_back(st);
  }

  std::vector<std::vector<TrainSample<float>>> data(remaining.size());
  std::vector<TrainStage> stages;
  for (size_t i = 0; i < remaining.size(); ++i) {
    data[i] = LoadTrainingSet(cfg, remaining[i].manifest, log);
    stages.push_back({remaining[i].name, &data[i], remaining[i].epochs});
  }

  const fs::path dir(out_dir);
  const std::string metrics_path = (dir / "metrics.csv").string();
  const bool append = start_epoch > 0 && fs::is_regular_file(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  std::ofstream train_log((dir / "train.log").string(), append ? std::ios::app : std::ios::trunc);
  if (!metrics || !train_log) throw Error("unwritable directory: " + out_dir);
  if (!append) metrics << FormatMetricsCsvHeader();
  EchoConfig(cfg, out_dir);

  TrainCallbacks cb;
  cb.on_stage = [&](const std::string& name, int first_epoch) {
    const std::string msg = "stage " + name + " begins at epoch " + std::to_string(first_epoch);
    train_log << msg << "\n" << std::flush;
    Log(log, msg);
  };
  cb.on_epoch = [&](const EpochMetrics& m, const ModelParams<float>& p) {
    metrics << FormatMetricsCsvRow(m) << std::flush;
    SaveCheckpoint((dir / EpochCheckpointName(m.epoch)).string(),
                   {p, cfg.stft, static_cast<uint32_t>(m.epoch)});
    std::string row = FormatMetricsCsvRow(m);
    row.pop_back();
    train_log << "epoch " << row << "\n" << std::flush;
    Log(log, "epoch " + row);
  };
  const int total_epochs = start_epoch + [&] {
    int n = 0;
    for (const auto& s : stages) n += s.epochs;
    return n;
  }();
  if (!stages.empty()) params = Train(params, stages, cfg.train, start_epoch, cb);
  SaveCheckpoint((dir / "final.ckpt").string(),
                 {params, cfg.stft, static_cast<uint32_t>(total_epochs)});
}

// ---------------------------------------------------------------------------
// decode

void DecodeCommand(const ExperimentConfig& cfg, const std::vector<std::string>& inputs,
                   const std::string& out_dir, const LogFn& log) {
  cfg.Validate();
  std::vector<std::string> sources = inputs;
  if (sources.empty())
    sources.push_back((fs::path(cfg.Resolve(cfg.paths.data)) / "manifest.json").string());
  std::vector<ManifestEntry> sessions;
  for (const auto& in : sources) {
    const std::string path = cfg.Resolve(in);
    if (!fs::is_regular_file(path)) throw Error("no such input: " + in);
    if (fs::path(path).extension() == ".json") {
      for (auto& e : ReadManifest(path)) sessions.push_back(std::move(e));
    } else {
      ManifestEntry e;
      e.id = fs::path(path).stem().string();
      e.mixture = path;
      sessions.push_back(std::move(e));
    }
  }
  std::set<std::string> ids;
  for (const auto& s : sessions)
    if (!ids.insert(s.id).second) throw Error("duplicate session id " + s.id);
  if (cfg.oracle)
    for (const auto& s : sessions)
      if (s.references.empty() || s.rttm.empty() || s.noise.empty())
        throw Error("oracle mode needs ground truth for session " + s.id);

  std::optional<Checkpoint> ckpt;
  std::optional<NetworkEstimator> net;
  StftConfig stft = cfg.stft;
  if (!cfg.oracle) {
    const std::string path = cfg.checkpoint.empty()
                                 ? (fs::path(cfg.Resolve(cfg.paths.checkpoints)) / "final.ckpt").string()
                                 : cfg.Resolve(cfg.checkpoint);
    ckpt = LoadCheckpoint(path);
    net.emplace(ckpt->params);
    stft = ckpt->stft;
  }
  MakeDirs(out_dir);

  std::vector<json> index(sessions.size());
  ParallelFor(sessions.size(), cfg.jobs, [&](size_t i) {
    const ManifestEntry& entry = sessions[i];
    SessionResult res;
    if (cfg.oracle) {
      const RenderedMeeting m = LoadMeeting(entry);
      const BlockLayout layout{m.mixture.sample_rate, cfg.decode.block_len, stft};
      std::vector<std::string> speakers;
      for (const auto& kv : m.references) speakers.push_back(kv.first);
      const OracleEstimator oracle(MakeOracleBlocks(m, layout, cfg.min_activity), speakers);
      if (cfg.fault_block >= 0) {
        std::string who = cfg.fault_speaker;
        if (who.empty() && cfg.fault_block < layout.NumBlocks(m.mixture.length())) {
          // Only a slot known from an earlier block can be split; take the
          // one with the most mask mass in the fault block.
          const auto& active = oracle.block(cfg.fault_block).active;
          const auto& irm = oracle.Irm(cfg.fault_block);
          double mass = -1.0;
          for (const auto& id : active) {
            bool known = false;
            for (int b = 0; b < cfg.fault_block; ++b) known = known || oracle.block(b).active.count(id);
            const double m = irm.count(id) ? irm.at(id).sum() : 0.0;
            if (known && m > mass) {
              mass = m;
              who = id;
            }
          }
          if (who.empty() && !active.empty()) who = *active.begin();
        }
        if (who.empty()) throw Error("no speaker to split in session " + entry.id);
        const FaultInjectingEstimator faulty(oracle, cfg.fault_block, who, cfg.fault_keep);
        res = DecodeSession(m.mixture, faulty, cfg.decode, stft);
      } else {
        res = DecodeSession(m.mixture, oracle, cfg.decode, stft);
      }
    } else {
      res = DecodeSession(ReadWav(entry.mixture), *net, cfg.decode, stft);
    }

    const fs::path dir = fs::path(out_dir) / entry.id;
    MakeDirs(dir.string());
    std::vector<AudioSignal> speakers;
    std::vector<std::string> labels;
    for (size_t k = 0; k < res.streams.size(); ++k) {
      WriteWav((dir / SlotFile(k)).string(), res.streams[k]);
      if (k > 0) {
        speakers.push_back(res.streams[k]);
        labels.push_back(SlotLabel(k));
      }
    }
    const Timeline hyp = StreamsToTimeline(speakers, labels, cfg.vad);
    WriteRttm((dir / "hyp.rttm").string(), hyp, entry.id);
    json activity = json::array();
    for (const auto& blk : res.activity) {
      json row = json::array();
      for (bool a : blk) row.push_back(a);
      activity.push_back(row);
    }
    const json act = {{"id", entry.id},
                      {"block_len", cfg.decode.block_len},
                      {"sample_rate", res.streams.empty() ? 0 : res.streams[0].sample_rate},
                      {"counts", res.counts},
                      {"iterations", res.iterations},
                      {"rejected_blocks", res.rejected_blocks},
                      {"final_count", res.final_count},
                      {"activity", activity}};
    WriteText((dir / "activity.json").string(), act.dump(2) + "\n");
    index[i] = {{"id", entry.id}, {"slots", res.streams.size()}, {"final_count", res.final_count}};
    Log(log, "decoded " + entry.id + ": " + std::to_string(res.final_count) + " speakers");
  });
  json idx = {{"oracle", cfg.oracle}, {"sessions", json::array()}};
  for (auto& e : index) idx["sessions"].push_back(std::move(e));
  WriteText((fs::path(out_dir) / "decode.json").string(), idx.dump(2) + "\n");
  EchoConfig(cfg, out_dir);
}

// ---------------------------------------------------------------------------
// score

void WriteSpectrogramPpm(const std::string& path, const ComplexSpectrogram& spec,
                         double range_db) {
  const Eigen::Index frames = spec.rows(), bins = spec.cols();
  Eigen::ArrayXXd db = 20.0 * (spec.abs() + 1e-12).log10();
  const double top = frames * bins > 0 ? db.maxCoeff() : 0.0;
  std::string out = "P6\n" + std::to_string(frames) + " " + std::to_string(bins) + "\n255\n";
  out.reserve(out.size() + 3 * frames * bins);
  for (Eigen::Index f = bins - 1; f >= 0; --f) {
    for (Eigen::Index t = 0; t < frames; ++t) {
      const double v = std::clamp((db(t, f) - (top - range_db)) / range_db, 0.0, 1.0);
      const char g = static_cast<char>(std::lround(255.0 * v));
      out.append(3, g);
    }
  }
  WriteText(path, out);
}

void ScoreCommand(const ExperimentConfig& cfg, const std::string& reference_manifest,
                  const std::string& hypothesis_dir, const std::string& out_dir,
                  const LogFn& log) {
  cfg.Validate();
  const std::vector<ManifestEntry> refs = ReadManifest(cfg.Resolve(reference_manifest));
  const fs::path hyp_dir(cfg.Resolve(hypothesis_dir));
  const json index = ReadJson((hyp_dir / "decode.json").string());
  std::set<std::string> ref_ids, hyp_ids;
  for (const auto& e : refs) ref_ids.insert(e.id);
  for (const auto& s : index.at("sessions")) hyp_ids.insert(s.at("id").get<std::string>());
  if (ref_ids != hyp_ids) throw Error("session id mismatch between reference and hypothesis");
  MakeDirs(out_dir);

  struct SpeakerRow {
    std::string session, speaker, stream;
    double sdr = 0.0, speech = 0.0;
  };
  std::vector<ScoreRow> rows(refs.size());
  std::vector<std::vector<SpeakerRow>> speaker_rows(refs.size());
  std::vector<std::vector<int>> est_counts(refs.size()), true_counts(refs.size());
  ParallelFor(refs.size(), cfg.jobs, [&](size_t i) {
    const ManifestEntry& e = refs[i];
    const fs::path sdir = hyp_dir / e.id;
    Timeline ref_tl;
    if (!e.rttm.empty()) {
      const auto r = ReadRttm(e.rttm);
      if (auto it = r.find(e.id); it != r.end()) ref_tl = it->second;
    }
    Timeline hyp_tl;
    {
      const auto h = ReadRttm((sdir / "hyp.rttm").string());
      if (auto it = h.find(e.id); it != h.end()) hyp_tl = it->second;
    }
    ScoreRow& row = rows[i];
    row.session = e.id;
    row.der = Der(ref_tl, hyp_tl, cfg.der_resolution);

    // SDR of each reference speaker against its mapped stream, or the best
    // stream when the DER mapping left it unmatched.
    const json act = ReadJson((sdir / "activity.json").string());
    const int slots = [&] {
      for (const auto& s : index.at("sessions"))
        if (s.at("id") == e.id) return s.at("slots").get<int>();
      return 0;
    }();
    std::map<std::string, Eigen::ArrayXd> streams;
    for (int k = 1; k < slots; ++k) {
      const fs::path p = sdir / SlotFile(k);
      if (fs::is_regular_file(p)) streams[SlotLabel(k)] = ReadWav(p.string()).channel(0);
    }
    double sdr_sum = 0.0;
    int sdr_n = 0;
    for (const auto& [spk, path] : e.references) {
      SpeakerRow sr{e.id, spk, "", std::numeric_limits<double>::quiet_NaN(), 0.0};
      for (const auto& seg : ref_tl.segments())
        if (seg.speaker == spk) sr.speech += seg.duration();
      const Eigen::ArrayXd reference = ReadWav(path).channel(0);
      if (reference.square().sum() > 0.0 && !streams.empty()) {
        auto score = [&](const Eigen::ArrayXd& est) {
          if (est.size() != reference.size()) throw Error("stream length mismatch in " + e.id);
          return Sdr(est, reference);
        };
        auto mapped = row.der.mapping.find(spk);
        if (mapped != row.der.mapping.end() && streams.count(mapped->second)) {
          sr.stream = mapped->second;
          sr.sdr = score(streams.at(sr.stream));
        } else {
          sr.sdr = -std::numeric_limits<double>::infinity();
          for (const auto& [label, est] : streams) {
            const double v = score(est);
            if (v > sr.sdr) {
              sr.sdr = v;
              sr.stream = label;
            }
          }
        }
        sdr_sum += sr.sdr;
        ++sdr_n;
      }
      speaker_rows[i].push_back(sr);
    }
    row.mean_sdr = sdr_n ? sdr_sum / sdr_n : std::numeric_limits<double>::quiet_NaN();

    est_counts[i] = act.at("counts").get<std::vector<int>>();
    const int rate = act.value("sample_rate", cfg.simulate.sim.sample_rate);
    const BlockLayout layout{rate, act.at("block_len").get<double>(), cfg.stft};
    true_counts[i] = CumulativeSpeakerCounts(ref_tl, layout, static_cast<int>(est_counts[i].size()),
                                             cfg.min_activity);
    row.counting_accuracy = CountingAccuracy(est_counts[i], true_counts[i]).accuracy;

    if (cfg.spectrograms) {
      const AudioSignal mix = ReadWav(e.mixture);
      WriteSpectrogramPpm((fs::path(out_dir) / (e.id + "_mixture.ppm")).string(),
                          Stft(mix.channel(0), cfg.stft));
      for (const auto& [spk, path] : e.references)
        WriteSpectrogramPpm((fs::path(out_dir) / (e.id + "_ref_" + spk + ".ppm")).string(),
                            Stft(ReadWav(path).channel(0), cfg.stft));
      for (const auto& [label, est] : streams)
        WriteSpectrogramPpm((fs::path(out_dir) / (e.id + "_" + label + ".ppm")).string(),
                            Stft(est, cfg.stft));
    }
    Log(log, "scored " + e.id);
  });

  // Pooled row over all sessions.
  ScoreRow all;
  all.session = "ALL";
  std::vector<int> est_all, true_all;
  double sdr_sum = 0.0;
  int sdr_n = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const DerReport& d = rows[i].der;
    all.der.missed_frames += d.missed_frames;
    all.der.false_alarm_frames += d.false_alarm_frames;
    all.der.confusion_frames += d.confusion_frames;
    all.der.total_frames += d.total_frames;
    all.der.missed += d.missed;
    all.der.false_alarm += d.false_alarm;
    all.der.confusion += d.confusion;
    all.der.total += d.total;
    for (const auto& sr : speaker_rows[i])
      if (std::isfinite(sr.sdr)) {
        sdr_sum += sr.sdr;
        ++sdr_n;
      }
    est_all.insert(est_all.end(), est_counts[i].begin(), est_counts[i].end());
    true_all.insert(true_all.end(), true_counts[i].begin(), true_counts[i].end());
  }
  const long errors = all.der.missed_frames + all.der.false_alarm_frames + all.der.confusion_frames;
  all.der.der = all.der.total_frames > 0
                    ? static_cast<double>(errors) / static_cast<double>(all.der.total_frames)
                    : (errors > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  all.mean_sdr = sdr_n ? sdr_sum / sdr_n : std::numeric_limits<double>::quiet_NaN();
  all.counting_accuracy = CountingAccuracy(est_all, true_all).accuracy;
  rows.push_back(all);
  WriteText((fs::path(out_dir) / "report.csv").string(), FormatScoreCsv(rows));

  std::ostringstream os;
  os << "session,speaker,stream,speech_s,SDR\n";
  char buf[64];
  for (const auto& group : speaker_rows)
    for (const auto& sr : group) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f", sr.speech, sr.sdr);
      os << sr.session << "," << sr.speaker << "," << sr.stream << "," << buf << "\n";
    }
  WriteText((fs::path(out_dir) / "speakers.csv").string(), os.str());
  EchoConfig(cfg, out_dir);
}

}  // namespace rsan
