// Copyright 2026 The afca-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "afca_lab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "afca_lab/augmentation.hpp"
#include "afca_lab/checkpoint.hpp"
#include "afca_lab/curation.hpp"
#include "afca_lab/errors.hpp"
#include "afca_lab/metrics.hpp"

namespace afca_lab::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw ValidationError(where + " has unknown key '" + k + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& field) {
  if (j.contains(key)) field = j.at(key).get<V>();
}

std::string resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  const fs::path p(j.at(key).get<std::string>());
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string num(double v) { return json(v).dump(); }

std::string csv_config_line(const RunConfig& cfg) { return "# config=" + to_json(cfg).dump() + "\n"; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// ---- demo-forward -------------------------------------------------------

struct CheckOutcome {
  std::string name;
  bool passed = false;
  double max_abs_diff = 0.0;
};

double max_diff(const Matrix<double>& a, const Matrix<double>& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

Matrix<double> aggregate(const Matrix<double>& h, const GridShape& grid,
                         const std::vector<IdentityStream<double>>& streams,
                         const std::vector<TokenMask>& masks, const AfcaWeights<double>& w) {
  return aggregate_identities<double>(VideoTokenGrid<double>(grid, h),
                                      std::span<const IdentityStream<double>>(streams),
                                      std::span<const TokenMask>(masks), w);
}

std::vector<CheckOutcome> afca_invariance_checks(const Matrix<double>& h, const GridShape& grid,
                                                 const ModelInputs<double>& in,
                                                 const ToyDiTWeights<double>& model, Rng& rng) {
  const AfcaWeights<double>& w = model.blocks.front().afca;
  const auto& streams = in.streams;
  const auto& masks = in.token_masks;
  const int n = static_cast<int>(streams.size());
  const int tokens = grid.num_tokens();
  const Matrix<double> base = aggregate(h, grid, streams, masks, w);
  std::vector<CheckOutcome> out;

  {  // permutation, at the AFCA layer and through one whole block
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    if (n > 2) std::shuffle(perm.begin(), perm.end(), rng);
    ModelInputs<double> p = in;
    for (int k = 0; k < n; ++k) {
      p.streams[k] = streams[perm[k]];
      p.token_masks[k] = masks[perm[k]];
    }
    const double d_layer = max_diff(aggregate(h, grid, p.streams, p.token_masks, w), base);
    const double d_block = max_diff(block_forward(h, p, model, 0), block_forward(h, in, model, 0));
    const double d = std::max(d_layer, d_block);
    out.push_back({"permutation", d <= 1e-6, d});
  }
  {  // zero masks leave the hidden state bit-identical
    const std::vector<TokenMask> zeros(n, TokenMask::zeros(tokens));
    const Matrix<double> z = aggregate(h, grid, streams, zeros, w);
    const bool exact = (z.array() == h.array()).all();
    out.push_back({"nullification", exact, max_diff(z, h)});
  }
  {  // one identity with an all-one mask is plain masked MHCA
    double d = 0.0;
    if (n > 0) {
      const VideoTokenGrid<double> g(grid, h);
      const KeyValue<double> kv = audio_face_kv(streams[0], w);
      const TemporalAttentionMask tm = build_temporal_mask(
          grid.latent_frames, static_cast<int>(streams[0].audio.tokens.rows()),
          static_cast<int>(streams[0].face.tokens.rows()));
      const Matrix<double> mhca = masked_mhca(g, kv.keys, kv.values, tm, w);
      const std::vector<IdentityStream<double>> one{streams[0]};
      const std::vector<TokenMask> ones{TokenMask::ones(tokens)};
      const Matrix<double> delta = aggregate(h, grid, one, ones, w) - h;
      d = max_diff(delta, mhca);
    }
    out.push_back({"single_identity_reduction", d <= 1e-6, d});
  }
  {  // disjoint masks: each row sees only its own identity
    std::vector<TokenMask> disjoint(n, TokenMask::zeros(tokens));
    for (int i = 0; i < tokens && n > 0; ++i) {
      const int owner = i % (n + 1);
      if (owner < n) disjoint[owner].values[i] = 1.0;
    }
    const Matrix<double> all = aggregate(h, grid, streams, disjoint, w);
    bool exact = true;
    double d = 0.0;
    for (int i = 0; i < tokens; ++i) {
      const int owner = n > 0 ? i % (n + 1) : n;
      Matrix<double> expect = h.row(i);
      if (owner < n) {
        const std::vector<IdentityStream<double>> one{streams[owner]};
        const std::vector<TokenMask> m{disjoint[owner]};
        expect = aggregate(h, grid, one, m, w).row(i);
      }
      exact = exact && (all.row(i).array() == expect.array()).all();
      d = std::max(d, max_diff(all.row(i), expect));
    }
    out.push_back({"disjoint_mask_locality", exact, d});
  }
  return out;
}

}  // namespace

// ---- config -------------------------------------------------------------

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  reject_unknown(j, {"seed", "paths", "model", "thresholds", "demo", "data", "eye_indices"}, "config");
  RunConfig c;
  try {
    read(j, "seed", c.seed);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown(p, {"input", "manifest", "stage2_manifest", "weights", "resume"}, "paths");
      c.paths.input = resolve(p, "input", base);
      c.paths.manifest = resolve(p, "manifest", base);
      c.paths.stage2_manifest = resolve(p, "stage2_manifest", base);
      c.paths.weights = resolve(p, "weights", base);
      c.paths.resume = resolve(p, "resume", base);
    }
    if (j.contains("model")) c.model = toy_config_from_json(j.at("model"));
    if (j.contains("thresholds")) {
      const json& t = j.at("thresholds");
      reject_unknown(t, {"min_sync_score", "face_count_quorum", "max_mean_flow", "jump_px"}, "thresholds");
      read(t, "min_sync_score", c.thresholds.min_sync_score);
      read(t, "face_count_quorum", c.thresholds.face_count_quorum);
      if (t.contains("max_mean_flow") && !t.at("max_mean_flow").is_null()) {
        c.thresholds.max_mean_flow = t.at("max_mean_flow").get<double>();
      }
      read(t, "jump_px", c.thresholds.jump_px);
    }
    if (j.contains("demo")) {
      const json& d = j.at("demo");
      reject_unknown(d, {"identities", "latent_frames", "rows", "cols", "audio_tokens", "face_tokens"},
                     "demo");
      read(d, "identities", c.demo.identities);
      read(d, "latent_frames", c.demo.latent_frames);
      read(d, "rows", c.demo.rows);
      read(d, "cols", c.demo.cols);
      read(d, "audio_tokens", c.demo.audio_tokens);
      read(d, "face_tokens", c.demo.face_tokens);
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown(d, {"source", "single_clips", "multi_clips"}, "data");
      read(d, "source", c.data.source);
      read(d, "single_clips", c.data.single_clips);
      read(d, "multi_clips", c.data.multi_clips);
    }
    read(j, "eye_indices", c.eye_indices);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.data.source != "synthetic" && c.data.source != "manifest") {
    throw ValidationError("data.source must be \"synthetic\" or \"manifest\"");
  }
  if (c.data.single_clips < 0 || c.data.multi_clips < 0) throw ValidationError("clip counts must be >= 0");
  if (c.demo.identities < 0 || c.demo.latent_frames < 1 || c.demo.rows < 1 || c.demo.cols < 1 ||
      c.demo.audio_tokens < 1 || c.demo.face_tokens < 0) {
    throw ValidationError("demo sizes out of range");
  }
  if (!(c.thresholds.face_count_quorum >= 0 && c.thresholds.face_count_quorum <= 1)) {
    throw ValidationError("face_count_quorum must lie in [0, 1]");
  }
  if (!(c.thresholds.jump_px >= 0)) throw ValidationError("jump_px must be >= 0");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  auto path_or_null = [](const std::string& p) { return p.empty() ? json(nullptr) : json(p); };
  return {{"seed", c.seed},
          {"paths",
           {{"input", path_or_null(c.paths.input)},
            {"manifest", path_or_null(c.paths.manifest)},
            {"stage2_manifest", path_or_null(c.paths.stage2_manifest)},
            {"weights", path_or_null(c.paths.weights)},
            {"resume", path_or_null(c.paths.resume)}}},
          {"model", afca_lab::to_json(c.model)},
          {"thresholds",
           {{"min_sync_score", c.thresholds.min_sync_score},
            {"face_count_quorum", c.thresholds.face_count_quorum},
            {"max_mean_flow", std::isfinite(c.thresholds.max_mean_flow)
                                  ? json(c.thresholds.max_mean_flow)
                                  : json(nullptr)},
            {"jump_px", c.thresholds.jump_px}}},
          {"demo",
           {{"identities", c.demo.identities},
            {"latent_frames", c.demo.latent_frames},
            {"rows", c.demo.rows},
            {"cols", c.demo.cols},
            {"audio_tokens", c.demo.audio_tokens},
            {"face_tokens", c.demo.face_tokens}}},
          {"data",
           {{"source", c.data.source},
            {"single_clips", c.data.single_clips},
            {"multi_clips", c.data.multi_clips}}},
          {"eye_indices", c.eye_indices}};
}

// ---- subcommands --------------------------------------------------------

int cmd_demo_forward(const RunConfig& cfg, const Options& opt, std::ostream& log) {
  const ToyDiTConfig& m = cfg.model;
  const RunConfig::Demo& d = cfg.demo;
  constexpr int kPatchPx = 16;
  const GridShape grid{d.latent_frames, d.rows, d.cols};
  const FrameDims frame{d.rows * kPatchPx, d.cols * kPatchPx};
  Rng rng = make_rng(cfg.seed, "demo-forward/instance");

  ToyDiTWeights<double> model = ToyDiTWeights<double>::init(m, rng);
  if (!cfg.paths.weights.empty()) {
    const AfcaWeights<float> loaded = afca_from_tensors(
        read_weight_blob(cfg.paths.weights), model.blocks.front().afca.cast<float>().dims());
    for (auto& b : model.blocks) b.afca = loaded.cast<double>();
  }

  ModelInputs<double> in;
  in.video = VideoTokenGrid<double>(grid, random_normal<double>(rng, grid.num_tokens(), m.latent_channels));
  in.text = random_normal<double>(rng, m.text_tokens, m.d_model);
  in.ref = random_normal<double>(rng, std::max(1, d.identities), m.d_model);
  std::uniform_int_distribution<int> ux(0, frame.width - 1), uy(0, frame.height - 1);
  for (int k = 0; k < d.identities; ++k) {
    const std::string id = "identity_" + std::to_string(k);
    IdentityStream<double> s;
    s.identity_id = id;
    s.audio = {id, random_normal<double>(rng, d.audio_tokens, m.d_af)};
    s.face = {id, random_normal<double>(rng, d.face_tokens, m.d_af)};
    int x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    s.pixel_mask = {{x0, y0, x1 + 1, y1 + 1}, frame};
    in.token_masks.push_back(token_mask_from_bbox(s.pixel_mask, grid.latent_frames, {kPatchPx, kPatchPx}));
    in.streams.push_back(std::move(s));
  }
  require_unique_identities(std::span<const IdentityStream<double>>(in.streams));

  Matrix<double> h = random_normal<double>(rng, grid.num_tokens(), m.d_model);
  const Matrix<double> h_in = h;
  json blocks = json::array();
  for (int b = 0; b < m.depth; ++b) {
    const auto contrib = afca_contributions(h, in, model, b);
    json norms = json::array();
    for (std::size_t k = 0; k < contrib.size(); ++k) {
      norms.push_back({{"identity", in.streams[k].identity_id},
                       {"active_tokens", std::count(in.token_masks[k].values.begin(),
                                                    in.token_masks[k].values.end(), 1.0)},
                       {"norm", contrib[k].norm()}});
    }
    blocks.push_back({{"block", b}, {"afca_norms", norms}});
    h = block_forward(h, in, model, b);
  }

  const Matrix<double> layer_out = aggregate(h_in, grid, in.streams, in.token_masks, model.blocks.front().afca);
  const bool unchanged = (layer_out.array() == h_in.array()).all();
  const auto checks = afca_invariance_checks(h_in, grid, in, model, rng);
  json jc = json::array();
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    jc.push_back({{"name", c.name}, {"passed", c.passed}, {"max_abs_diff", c.max_abs_diff}});
    if (!c.passed) failed.push_back(c.name);
  }
  const json trace{{"config", to_json(cfg)},
                   {"identities", d.identities},
                   {"grid", {grid.latent_frames, grid.rows, grid.cols}},
                   {"blocks", blocks},
                   {"afca_layer_identity", unchanged},
                   {"checks", jc},
                   {"failed_checks", failed}};
  write_json(opt.out_dir / "demo_forward.json", trace);
  write_weight_blob(opt.out_dir / "afca_weights",
                    afca_tensors(model.blocks.front().afca.cast<float>()),
                    {{"config", to_json(cfg)}});
  if (d.identities == 0) log << "no identities: H_out == H_in is " << (unchanged ? "true" : "false") << "\n";
  for (const auto& c : checks) {
    log << (c.passed ? "pass " : "FAIL ") << c.name << " (max |diff| " << c.max_abs_diff << ")\n";
  }
  if (!failed.empty()) {
    log << "invariance check failed: " << failed.front() << "\n";
    return kInvarianceFailure;
  }
  return kOk;
}

int cmd_train_toy(const RunConfig& cfg, const Options& opt, std::ostream& log) {
  const ToyDiTConfig& m = cfg.model;
  const StagePlan plan = two_stage_schedule(m);

  std::vector<ClipSample> pool1;
  std::vector<ClipSample> pool2;
  if (cfg.data.source == "manifest") {
    if (cfg.paths.manifest.empty()) throw IoError("data.source is manifest but paths.manifest is unset");
    const std::vector<ClipSample> clips = load_clip_manifest(cfg.paths.manifest);
    for (const auto& c : clips)
      if (c.identity_streams.size() == 1) pool1.push_back(c);
    pool2 = cfg.paths.stage2_manifest.empty() ? clips : load_clip_manifest(cfg.paths.stage2_manifest);
  } else {
    const std::uint64_t data_seed = derive_seed(cfg.seed, "train/data");
    char name[32];
    for (int i = 0; i < cfg.data.single_clips; ++i) {
      std::snprintf(name, sizeof name, "single_%03d", i);
      pool1.push_back(synthetic_single_clip(data_seed, name, m));
    }
    for (int i = 0; i < cfg.data.multi_clips; ++i) {
      std::snprintf(name, sizeof name, "multi_%03d", i);
      pool2.push_back(synthetic_multi_clip(data_seed, name, m));
    }
  }

  const std::string resume = !opt.resume_override.empty() ? opt.resume_override : cfg.paths.resume;
  TrainState st;
  if (!resume.empty()) {
    st = load_checkpoint(resume, m);
    log << "resumed from " << resume << " at step " << st.step << "\n";
  } else {
    Rng init = make_rng(cfg.seed, "train/init");
    st = TrainState::init(m, init);
  }
  const long s1 = plan.stages[0].steps;
  const long total = s1 + plan.stages[1].steps;
  if (opt.stage2_only && st.step < s1) st.step = s1;
  const long start_step = st.step;
  const SyntheticEncoder enc{derive_seed(cfg.seed, "train/encoder"), m.d_model};

  std::ostringstream curve;
  curve << csv_config_line(cfg)
        << "step,stage,lr,base_lr,loss,mode,input_samples,output_samples,identity_streams\n";
  std::vector<double> losses;
  std::vector<std::string> warnings;
  json stages = json::array();
  std::map<std::string, int> modes;
  std::vector<long> first(2, -1), last(2, -1);

  while (st.step < total) {
    const std::size_t idx = st.step < s1 ? 0 : 1;
    const int in_stage = static_cast<int>(idx == 0 ? st.step : st.step - s1);
    const StageSpec& spec = plan.stages[idx];
    st.stage = spec.stage;
    const std::vector<ClipSample>& pool = idx == 0 ? pool1 : pool2;
    if (pool.empty()) throw ContractError("stage " + std::to_string(spec.stage) + " has no training clips");
    Rng rng = make_rng(cfg.seed, "train/step/" + std::to_string(st.step));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<ClipSample> batch;
    for (int b = 0; b < m.batch_size; ++b) batch.push_back(pool[pick(rng)]);

    std::vector<ClipSample> samples;
    std::string mode = "multi";
    int input_samples = static_cast<int>(batch.size());
    if (spec.mixed_pairing) {
      for (auto& c : batch) c = crop_for_training(c, rng);
      BatchSelection sel = select_batch_mode(batch, rng);
      mode = to_string(sel.mode);
      for (const auto& w : sel.warnings) warnings.push_back("step " + std::to_string(st.step) + ": " + w);
      samples = std::move(sel.samples);
    } else {
      require_min_identities(batch, spec.min_identities);
      samples = std::move(batch);
    }
    std::vector<TrainingSample> ts;
    int streams = 0;
    for (const auto& c : samples) {
      ts.push_back(make_training_sample(c, enc, m));
      streams += static_cast<int>(c.identity_streams.size());
    }
    const double lr = plan.lr_at(idx, in_stage);
    const long step = st.step;
    double loss = 0.0;
    try {
      loss = training_step(ts, st, rng, lr, m);
    } catch (const NumericalError& e) {
      write_json(opt.out_dir / "diagnostics.json",
                 {{"config", to_json(cfg)}, {"error", e.what()}, {"step", step}, {"stage", spec.stage},
                  {"lr", lr}, {"losses_so_far", losses}});
      log << "numerical failure: " << e.what() << "\n";
      return kNumericalFailure;
    }
    losses.push_back(loss);
    ++modes[mode];
    if (first[idx] < 0) first[idx] = step;
    last[idx] = step;
    curve << step << ',' << spec.stage << ',' << num(lr) << ',' << num(spec.lr) << ',' << num(loss)
          << ',' << mode << ',' << input_samples << ',' << samples.size() << ',' << streams << '\n';
  }

  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const StageSpec& s = plan.stages[i];
    stages.push_back({{"stage", s.stage},
                      {"base_lr", s.lr},
                      {"warmup_steps", s.warmup_steps},
                      {"planned_steps", s.steps},
                      {"first_step", first[i] < 0 ? json(nullptr) : json(first[i])},
                      {"last_step", last[i] < 0 ? json(nullptr) : json(last[i])}});
  }
  const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(20, losses.size() / 2));
  json summary{{"config", to_json(cfg)},
               {"start_step", start_step},
               {"final_step", st.step},
               {"stage1_end", s1},
               {"stages", stages},
               {"mode_counts", modes},
               {"warnings", warnings}};
  if (!losses.empty()) {
    const double a = std::accumulate(losses.begin(), losses.begin() + window, 0.0) / window;
    const double b = std::accumulate(losses.end() - window, losses.end(), 0.0) / window;
    summary["smoothing_window"] = window;
    summary["smoothed_initial_loss"] = a;
    summary["smoothed_final_loss"] = b;
    summary["loss_decreased"] = b < a;
    log << "steps " << start_step << ".." << st.step << ", smoothed loss " << a << " -> " << b << "\n";
  } else {
    log << "nothing to do: checkpoint already at step " << st.step << "\n";
  }
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  write_text(opt.out_dir / "loss_curve.csv", curve.str());
  write_json(opt.out_dir / "train_summary.json", summary);
  save_checkpoint(opt.out_dir / "checkpoint", st, {{"config", to_json(cfg)}});
  return kOk;
}

int cmd_curate(const RunConfig& cfg, const Options& opt, std::ostream& log) {
  const std::string input = !opt.input_override.empty() ? opt.input_override : cfg.paths.input;
  if (input.empty()) throw IoError("curate needs an input file (paths.input or --input)");
  std::ifstream in(input);
  if (!in) throw IoError("cannot open " + input);
  const curation::CurationConfig cc{cfg.thresholds.min_sync_score, cfg.thresholds.face_count_quorum,
                                    cfg.thresholds.max_mean_flow};
  std::vector<curation::AuditRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    records.push_back(curation::curate_line(line, line_no, cc, cfg.seed));
  }
  if (in.bad()) throw IoError("read failed: " + input);

  std::ostringstream audit;
  audit << json{{"config", to_json(cfg)}}.dump() << "\n";
  for (const auto& r : records) audit << curation::to_json(r).dump() << "\n";
  write_text(opt.out_dir / "audit.ndjson", audit.str());
  const curation::CurationSummary s = curation::summarize(records);
  write_json(opt.out_dir / "curation_summary.json", {{"config", to_json(cfg)}, {"summary", curation::to_json(s)}});
  log << s.total << " clips: " << s.accepted << " accepted, " << s.rejected << " rejected, "
      << s.validation_errors << " invalid (yield " << s.yield() << ")\n";
  return s.accepted == s.total ? kOk : kPartialReject;
}

int cmd_eval(const RunConfig& cfg, const Options& opt, std::ostream& log) {
  const std::string input = !opt.input_override.empty() ? opt.input_override : cfg.paths.input;
  if (input.empty()) throw IoError("eval needs a corpus directory (paths.input or --input)");
  if (!fs::is_directory(input)) throw IoError("not a directory: " + input);
  metrics::EvalOptions eo;
  eo.jump_px = cfg.thresholds.jump_px;
  eo.eye_indices = cfg.eye_indices;
  eo.emit_motion_series = opt.plot;
  const metrics::CorpusReport report = metrics::corpus_report(input, eo);

  json j = metrics::to_json(report);
  j["config"] = to_json(cfg);
  write_json(opt.out_dir / "eval_report.json", j);
  write_text(opt.out_dir / "eval_report.csv", csv_config_line(cfg) + metrics::to_csv(report));
  if (opt.plot) {
    fs::create_directories(opt.out_dir / "motion");
    for (const auto& c : report.clips) {
      metrics::CorpusReport one;
      one.clips.push_back(c);
      write_text(opt.out_dir / "motion" / (c.clip_id + ".csv"),
                 csv_config_line(cfg) + metrics::motion_series_csv(one));
    }
  }
  log << report.clips.size() << " clips evaluated, " << report.skipped.size() << " skipped\n";
  for (const auto& s : report.skipped) log << "skipped " << s.clip_id << ": " << s.reason << "\n";
  return report.skipped.empty() ? kOk : kIoError;
}

// ---- entry point --------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-face cross attention lab", "afca-lab"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  };
  CLI::App* demo = app.add_subcommand("demo-forward", "AFCA forward trace and invariance checks");
  CLI::App* train = app.add_subcommand("train-toy", "two-stage toy training run");
  CLI::App* curate = app.add_subcommand("curate", "two-person curation audit over ndjson metadata");
  CLI::App* eval = app.add_subcommand("eval", "interactivity and Sync-C* over a landmark corpus");
  for (CLI::App* s : {demo, train, curate, eval}) common(s);
  train->add_flag("--stage2-only", opt.stage2_only, "skip stage 1");
  train->add_option("--resume", opt.resume_override, "checkpoint directory to continue from");
  curate->add_option("--input", opt.input_override, "ndjson metadata file");
  eval->add_option("--input", opt.input_override, "corpus directory");
  eval->add_flag("--plot", opt.plot, "also write per-clip motion-over-time CSVs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kIoError;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const std::string started = utc_now();
  opt.out_dir = out_dir;

  int code = kOk;
  std::string error;
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    fs::create_directories(opt.out_dir);
    if (command == "demo-forward") {
      code = cmd_demo_forward(cfg, opt, out);
    } else if (command == "train-toy") {
      code = cmd_train_toy(cfg, opt, out);
    } else if (command == "curate") {
      code = cmd_curate(cfg, opt, out);
    } else {
      code = cmd_eval(cfg, opt, out);
    }
  } catch (const ContractError& e) {
    error = e.what();
    code = kContractViolation;
  } catch (const NumericalError& e) {
    error = e.what();
    code = kNumericalFailure;
  } catch (const Error& e) {
    error = e.what();
    code = kIoError;
  } catch (const fs::filesystem_error& e) {
    error = e.what();
    code = kIoError;
  } catch (const nlohmann::json::exception& e) {
    error = e.what();
    code = kIoError;
  }
  if (!error.empty()) err << "afca-lab " << command << ": " << error << "\n";

  try {
    if (fs::is_directory(opt.out_dir)) {
      write_json(opt.out_dir / "run_meta.json", {{"command", command},
                                                 {"args", args},
                                                 {"started_at", started},
                                                 {"finished_at", utc_now()},
                                                 {"exit_code", code},
                                                 {"error", error.empty() ? json(nullptr) : json(error)}});
    }
  } catch (const std::exception& e) {
    err << "afca-lab: could not write run_meta.json: " << e.what() << "\n";
  }
  return code;
}

}  // namespace afca_lab::cli
