#include "ghfr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ghfr/config.hpp"
#include "ghfr/crsm.hpp"
#include "ghfr/error.hpp"
#include "ghfr/evalkit.hpp"
#include "ghfr/fusion.hpp"
#include "ghfr/mrf_weights.hpp"
#include "ghfr/parallel.hpp"
#include "ghfr/pipeline.hpp"
#include "ghfr/repset.hpp"
#include "ghfr/synthgen.hpp"

namespace ghfr {

namespace fs = std::filesystem;

namespace {

struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
  std::string stage;
};

template <typename F>
auto in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// Output files of a run, written as "stage<TAB>path" lines.
struct Produced {
  std::vector<std::pair<std::string, fs::path>> files;
  void add(const std::string& stage, const fs::path& p) { files.emplace_back(stage, p); }
};

int default_jobs() {
  if (const char* env = std::getenv("GHFR_JOBS")) {
    try {
      const int j = std::stoi(env);
      if (j >= 1) return j;
    } catch (const std::exception&) {
    }
    throw StageError("setup", std::string("GHFR_JOBS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> K;
  std::optional<double> alpha;
  std::optional<std::string> features;
  int jobs = 0;

  void add_to(CLI::App* app, bool solver_flags) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--set", sets, "override one configuration key (key=value)");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--jobs", jobs, "worker threads (default: GHFR_JOBS, else all cores)")->check(CLI::PositiveNumber);
    if (solver_flags) {
      app->add_option("--K", K, "comma-separated candidate counts");
      app->add_option("--alpha", alpha, "neighbor compatibility weight");
      app->add_option("--features", features, "descriptor kinds, e.g. hog,sift,raw");
    }
  }

  PipelineConfig config_value() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
      const auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(' '));
        v.erase(v.find_last_not_of(' ') + 1);
        return v;
      };
      set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (seed) cfg.seed = *seed;
    if (K) cfg.K = parse_int_list(*K);
    if (alpha) cfg.alpha = *alpha;
    if (features) cfg.kinds = parse_descriptor_list(*features);
    cfg.validate();
    return cfg;
  }

  int jobs_value() const { return jobs > 0 ? jobs : default_jobs(); }
};

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

// ---- synth ---------------------------------------------------------------

void stage_synth(const PipelineConfig& cfg, const fs::path& out, const std::string& from_dir, int jobs,
                 Produced& produced) {
  in_stage("synth", [&] {
    const DatasetManifest m =
        from_dir.empty() ? generate_dataset(cfg.synth(), out, jobs) : stylize_directory(cfg.synth(), from_dir, out);
    for (const auto& e : m.entries) {
      produced.add("synth", out / e.a);
      produced.add("synth", out / e.b);
    }
    for (const auto& e : m.distractors) produced.add("synth", out / e.a);
    for (const char* f : {"manifest.tsv", "splits.tsv", "rep.tsv", "train.tsv", "test.tsv", "labels.tsv"})
      produced.add("synth", out / f);
    if (!m.distractors.empty()) produced.add("synth", out / "distractors.tsv");
    return 0;
  });
}

// ---- build-repset --------------------------------------------------------

void stage_build_repset(const PipelineConfig& cfg, const fs::path& pairs, const fs::path& out, int jobs,
                        Produced& produced) {
  in_stage("build-repset", [&] {
    const fs::path base = pairs.parent_path();
    std::vector<ImagePair> images;
    for (const auto& row : read_tsv(pairs)) {
      if (row.size() != 3) throw Error("manifest '" + pairs.string() + "': expected id<TAB>pathA<TAB>pathB");
      images.push_back({row[0], load_image(resolve(base, row[1])), load_image(resolve(base, row[2]))});
    }
    if (images.empty()) throw Error("manifest '" + pairs.string() + "' lists no pairs");
    const RepresentationSet rs = build_repset(images, cfg.grid(), cfg.kinds, jobs);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    rs.save(out);
    produced.add("build-repset", out);
    return 0;
  });
}

// ---- represent -----------------------------------------------------------

struct ImageList {
  std::vector<std::string> ids;
  std::vector<fs::path> paths;
};

ImageList list_images(const fs::path& in, Modality m) {
  ImageList list;
  if (fs::is_directory(in)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG"))
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      list.ids.push_back(f.stem().string());
      list.paths.push_back(f);
    }
  } else {
    const std::size_t col = m == Modality::A ? 1 : 2;
    for (const auto& row : read_tsv(in)) {
      if (row.size() <= col)
        throw Error("manifest '" + in.string() + "' has no modality-" + std::string(to_string(m)) + " column");
      list.ids.push_back(row[0]);
      list.paths.push_back(resolve(in.parent_path(), row[col]));
    }
  }
  if (list.ids.empty()) throw Error("no input images in '" + in.string() + "'");
  return list;
}

void stage_represent(PipelineConfig cfg, const fs::path& repset, Modality m, const fs::path& in, const fs::path& out,
                     int jobs, std::ostream& err, Produced& produced) {
  in_stage("represent", [&] {
    if (!fs::exists(repset)) throw Error("representation set '" + repset.string() + "' does not exist");
    const RepresentationSet rs = RepresentationSet::load(repset);
    const PatchGrid& g = rs.grid();
    cfg.width = g.image_width();
    cfg.height = g.image_height();
    cfg.patch_size = g.patch_size();
    cfg.step = g.step();
    const auto Ks = cfg.effective_K(rs.size());
    if (Ks.size() != cfg.K.size())
      err << "represent: dropping K values above the " << rs.size() << " representation pairs\n";
    const Representer rep(rs, cfg);
    const ImageList list = list_images(in, m);
    fs::create_directories(out);
    std::vector<std::vector<fs::path>> written(list.ids.size());
    std::vector<GrayImage> images(list.ids.size());
    for (std::size_t i = 0; i < list.ids.size(); ++i) images[i] = load_image(list.paths[i]);
    parallel_for(list.ids.size(), jobs, [&](std::size_t i) {
      const RepresentationBundle b = rep.represent(images[i], m);
      for (const auto& [key, r] : b) {
        const fs::path p = out / (list.ids[i] + "." + metric_label(key) + ".ghrw");
        save_representation(p, {key.kind, key.K, r});
        written[i].push_back(p);
      }
    });
    for (const auto& w : written)
      for (const auto& p : w) produced.add("represent", p);
    return 0;
  });
}

// ---- match ---------------------------------------------------------------

struct BundleSet {
  std::vector<std::string> ids;
  std::vector<RepresentationBundle> bundles;
};

BundleSet read_bundles(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("representation directory '" + dir.string() + "' does not exist");
  std::map<std::string, RepresentationBundle> byid;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".ghrw") continue;
    const std::string stem = e.path().stem().string();
    const auto dot = stem.rfind('.');
    if (dot == std::string::npos || dot == 0) throw Error("unexpected representation file name '" + stem + "'");
    const RepresentationFile f = load_representation(e.path());
    byid[stem.substr(0, dot)][{f.kind, f.K}] = f.rep;
  }
  if (byid.empty()) throw Error("no .ghrw files in '" + dir.string() + "'");
  BundleSet s;
  for (auto& [id, b] : byid) {
    s.ids.push_back(id);
    s.bundles.push_back(std::move(b));
  }
  return s;
}

std::vector<MetricKey> common_keys(const BundleSet& a, const BundleSet& b) {
  std::vector<MetricKey> keys;
  for (const auto& [k, r] : a.bundles.front()) keys.push_back(k);
  const auto same = [&](const RepresentationBundle& x) {
    if (x.size() != keys.size()) return false;
    for (const auto& k : keys)
      if (!x.count(k)) return false;
    return true;
  };
  for (const auto& x : a.bundles)
    if (!same(x)) throw Error("probe representations cover different metric sets");
  for (const auto& x : b.bundles)
    if (!same(x)) throw Error("gallery representations do not cover the probe metric set");
  std::sort(keys.begin(), keys.end());
  return keys;
}

void stage_match(const fs::path& probes, const fs::path& gallery, const fs::path& out, const fs::path& maps,
                 const fs::path& repset, int jobs, Produced& produced) {
  in_stage("match", [&] {
    const BundleSet p = read_bundles(probes);
    const BundleSet g = read_bundles(gallery);
    const auto keys = common_keys(p, g);
    const ScoreTable t = score_all_pairs(p.ids, p.bundles, g.ids, g.bundles, keys, jobs);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_score_table(out, t);
    produced.add("match", out);
    if (!maps.empty()) {
      if (repset.empty()) throw Error("--maps needs --repset for the patch geometry");
      const PatchGrid grid = RepresentationSet::load(repset).grid();
      fs::create_directories(maps);
      for (std::size_t i = 0; i < p.ids.size(); ++i)
        for (std::size_t j = 0; j < g.ids.size(); ++j) {
          if (p.ids[i] != g.ids[j]) continue;
          for (const auto& k : keys) {
            const SimilarityMap sm = similarity_map(p.bundles[i].at(k), g.bundles[j].at(k), grid);
            const fs::path base = maps / (p.ids[i] + "." + metric_label(k));
            save_pgm(render_map(sm, grid), base.string() + ".pgm");
            save_pgm(render_map(binarize_map(sm), grid), base.string() + ".bin.pgm");
            produced.add("match", base.string() + ".pgm");
            produced.add("match", base.string() + ".bin.pgm");
          }
        }
    }
    return 0;
  });
}

// ---- fuse-train ----------------------------------------------------------

void stage_fuse_train(const PipelineConfig& cfg, const fs::path& scores, const fs::path& labels, const fs::path& out,
                      std::ostream& err, Produced& produced) {
  in_stage("fuse-train", [&] {
    bool fell_back = false;
    const FusionModel m = train_fusion(cfg, read_score_table(scores), read_labels(labels), &fell_back);
    if (fell_back) err << "fuse-train: degenerate training set, using mean-score fusion\n";
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_model(out, m);
    produced.add("fuse-train", out);
    return 0;
  });
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateInputs {
  fs::path scores;
  fs::path labels;
  fs::path model;
  std::string metric;
  fs::path distractor_scores;
  fs::path out;
};

nlohmann::ordered_json metrics_json(const EvalMetrics& m) {
  nlohmann::ordered_json j;
  for (const auto& [r, acc] : m.rank_accuracy) j["rank" + std::to_string(r)] = acc;
  j["far"] = m.far;
  j["vr_at_far"] = m.vr;
  j["gallery_size"] = m.curve.rates.size();
  return j;
}

nlohmann::ordered_json stage_evaluate(const PipelineConfig& cfg, const EvaluateInputs& in, int jobs,
                                      Produced& produced) {
  return in_stage("evaluate", [&] {
    const ScoreTable table = read_score_table(in.scores);
    const LabelMap labels = read_labels(in.labels);
    FusionModel model;
    if (!in.model.empty()) {
      model = load_model(in.model);
    } else {
      std::vector<std::string> ordering;
      if (!in.metric.empty())
        ordering.push_back(in.metric);
      else
        for (const auto& k : table.keys) ordering.push_back(metric_label(k));
      model = mean_model(ordering);
    }
    const MatchMatrix mm = fused_matrix(table, model, labels);
    const EvalMetrics m = evaluate(mm, cfg.ranks, cfg.far, jobs);
    fs::create_directories(in.out);
    write_metrics_tsv(in.out / "metrics.tsv", m);
    write_cmc(in.out / "cmc.tsv", m.curve);
    produced.add("evaluate", in.out / "metrics.tsv");
    produced.add("evaluate", in.out / "cmc.tsv");

    nlohmann::ordered_json summary;
    summary["probes"] = mm.probes();
    summary["fused"] = metrics_json(m);
    nlohmann::ordered_json singles;
    double gsum = 0.0, isum = 0.0;
    std::size_t gn = 0, in_count = 0;
    for (std::size_t c = 0; c < table.keys.size(); ++c) {
      const MatchMatrix single = metric_matrix(table, c, labels);
      singles[metric_label(table.keys[c])] = cmc(single, jobs).at(1);
      const auto v = verification_scores(single);
      for (double s : v.genuine) gsum += s;
      for (double s : v.impostor) isum += s;
      gn += v.genuine.size();
      in_count += v.impostor.size();
    }
    summary["single_rank1"] = singles;
    summary["genuine_mean_crsm"] = gn ? gsum / static_cast<double>(gn) : 0.0;
    summary["impostor_mean_crsm"] = in_count ? isum / static_cast<double>(in_count) : 0.0;

    if (!in.distractor_scores.empty()) {
      const MatchMatrix dm = fused_matrix(read_score_table(in.distractor_scores), model, labels);
      if (dm.probe_labels != mm.probe_labels) throw Error("distractor scores list different probes");
      const MatchMatrix pop = populate_gallery(mm, dm.gallery_labels, dm.scores);
      const EvalMetrics pm = evaluate(pop, cfg.ranks, cfg.far, jobs);
      write_metrics_tsv(in.out / "populated_metrics.tsv", pm);
      write_cmc(in.out / "populated_cmc.tsv", pm.curve);
      produced.add("evaluate", in.out / "populated_metrics.tsv");
      produced.add("evaluate", in.out / "populated_cmc.tsv");
      summary["populated"] = metrics_json(pm);
      const auto base = mate_ranks(mm, jobs);
      const auto after = mate_ranks(pop, jobs);
      bool monotone = true;
      for (std::size_t p = 0; p < base.size(); ++p) monotone = monotone && after[p] >= base[p];
      summary["populated"]["mate_ranks_nondecreasing"] = monotone;
    }
    std::ofstream js(in.out / "summary.json");
    js << summary.dump(2) << '\n';
    if (!js) throw Error("cannot write summary.json");
    produced.add("evaluate", in.out / "summary.json");
    return summary;
  });
}

void write_produced(const fs::path& path, const Produced& produced) {
  std::ofstream out(path);
  for (const auto& [stage, p] : produced.files) out << stage << '\t' << p.generic_string() << '\n';
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

void print_produced(std::ostream& out, const Produced& produced) {
  for (const auto& [stage, p] : produced.files) out << p.generic_string() << '\n';
}

// ---- pipeline ------------------------------------------------------------

void run_pipeline_command(const PipelineConfig& cfg, const fs::path& out, int jobs, std::ostream& os,
                          std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Produced produced;
  fs::create_directories(out);
  {
    std::ofstream c(out / "config.txt");
    c << dump_config(cfg);
    produced.add("pipeline", out / "config.txt");
  }
  const fs::path data = out / "data";
  stage_synth(cfg, data, "", jobs, produced);
  const fs::path repset = out / "repset.bin";
  stage_build_repset(cfg, data / "rep.tsv", repset, jobs, produced);

  const Modality pm = cfg.probe_modality;
  const Modality gm = pm == Modality::A ? Modality::B : Modality::A;
  const fs::path reps = out / "reps";
  Produced reps_produced;
  stage_represent(cfg, repset, pm, data / "train.tsv", reps / "train_probe", jobs, err, reps_produced);
  stage_represent(cfg, repset, gm, data / "train.tsv", reps / "train_gallery", jobs, err, reps_produced);
  stage_represent(cfg, repset, pm, data / "test.tsv", reps / "test_probe", jobs, err, reps_produced);
  stage_represent(cfg, repset, gm, data / "test.tsv", reps / "test_gallery", jobs, err, reps_produced);
  if (cfg.distractors > 0)
    stage_represent(cfg, repset, gm, data / "distractors.tsv", reps / "distractors", jobs, err, reps_produced);
  produced.files.insert(produced.files.end(), reps_produced.files.begin(), reps_produced.files.end());

  stage_match(reps / "train_probe", reps / "train_gallery", out / "train_scores.tsv", {}, {}, jobs, produced);
  stage_match(reps / "test_probe", reps / "test_gallery", out / "test_scores.tsv", {}, {}, jobs, produced);
  if (cfg.distractors > 0)
    stage_match(reps / "test_probe", reps / "distractors", out / "distractor_scores.tsv", {}, {}, jobs, produced);

  stage_fuse_train(cfg, out / "train_scores.tsv", data / "labels.tsv", out / "model.tsv", err, produced);

  EvaluateInputs ev;
  ev.scores = out / "test_scores.tsv";
  ev.labels = data / "labels.tsv";
  ev.model = out / "model.tsv";
  if (cfg.distractors > 0) ev.distractor_scores = out / "distractor_scores.tsv";
  ev.out = out / "eval";
  const auto summary = stage_evaluate(cfg, ev, jobs, produced);

  produced.add("pipeline", out / "files.tsv");
  write_produced(out / "files.tsv", produced);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  os << summary.dump(2) << '\n' << "elapsed_seconds " << secs << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graphical-representation heterogeneous image matching"};
  app.name("ghfr");
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic two-modality dataset");
  Common synth_c;
  std::string synth_out, from_dir;
  std::optional<int> identities, distractors;
  synth_c.add_to(synth, false);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--identities", identities, "number of identities");
  synth->add_option("--distractors", distractors, "extra modality-A distractor identities");
  synth->add_option("--from-dir", from_dir, "stylize the photos in this directory instead of rendering faces");

  auto* build = app.add_subcommand("build-repset", "build the representation set file");
  Common build_c;
  std::string build_pairs, build_out;
  build_c.add_to(build, false);
  build->add_option("--features", build_c.features, "descriptor kinds, e.g. hog,sift,raw");
  build->add_option("--pairs", build_pairs, "manifest: id<TAB>pathA<TAB>pathB")->required();
  build->add_option("--out", build_out, "output file")->required();

  auto* represent = app.add_subcommand("represent", "solve graphical representations of images");
  Common rep_c;
  std::string rep_repset, rep_in, rep_out, rep_modality;
  rep_c.add_to(represent, true);
  represent->add_option("--repset", rep_repset, "representation set file")->required();
  represent->add_option("--modality", rep_modality, "modality of the input images (A or B)")->required();
  represent->add_option("--in", rep_in, "image directory or manifest")->required();
  represent->add_option("--out", rep_out, "output directory")->required();

  auto* match = app.add_subcommand("match", "score every probe against every gallery entry");
  Common match_c;
  std::string match_probes, match_gallery, match_out, match_maps, match_repset;
  match_c.add_to(match, false);
  match->add_option("--probes", match_probes, "probe representation directory")->required();
  match->add_option("--gallery", match_gallery, "gallery representation directory")->required();
  match->add_option("--out", match_out, "score table (TSV)")->required();
  match->add_option("--maps", match_maps, "write similarity maps of same-id pairs here");
  match->add_option("--repset", match_repset, "representation set (patch geometry for --maps)");

  auto* fuse_train = app.add_subcommand("fuse-train", "train the score fusion model");
  Common fuse_c;
  std::string fuse_scores, fuse_labels, fuse_out, fuse_method;
  std::optional<double> fuse_nu;
  fuse_c.add_to(fuse_train, false);
  fuse_train->add_option("--scores", fuse_scores, "training score table")->required();
  fuse_train->add_option("--labels", fuse_labels, "image_id<TAB>identity")->required();
  fuse_train->add_option("--out", fuse_out, "model file")->required();
  fuse_train->add_option("--method", fuse_method, "svm or mean");
  fuse_train->add_option("--nu", fuse_nu, "fixed nu in (0,1]; default selects it");

  auto* eval = app.add_subcommand("evaluate", "identification and verification metrics");
  Common eval_c;
  EvaluateInputs ev;
  std::string ev_scores, ev_labels, ev_model, ev_dist, ev_out = "eval";
  std::optional<std::string> ev_ranks;
  std::optional<double> ev_far;
  eval_c.add_to(eval, false);
  eval->add_option("--scores", ev_scores, "score table")->required();
  eval->add_option("--labels", ev_labels, "image_id<TAB>identity")->required();
  eval->add_option("--model", ev_model, "fusion model (default: mean of all columns)");
  eval->add_option("--metric", ev.metric, "evaluate one metric column instead");
  eval->add_option("--distractor-scores", ev_dist, "probe x distractor score table");
  eval->add_option("--ranks", ev_ranks, "comma-separated ranks");
  eval->add_option("--far", ev_far, "false accept rate for the verification rate");
  eval->add_option("--out", ev_out, "output directory");

  auto* pipeline = app.add_subcommand("pipeline", "synth, build-repset, represent, match, fuse-train, evaluate");
  Common pipe_c;
  std::string pipe_out = "ghfr_out";
  std::optional<int> pipe_distractors;
  pipe_c.add_to(pipeline, true);
  pipeline->add_option("--out", pipe_out, "output directory");
  pipeline->add_option("--distractors", pipe_distractors, "distractor gallery identities");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  std::string stage = "setup";
  try {
    Produced produced;
    if (synth->parsed()) {
      stage = "synth";
      PipelineConfig cfg = in_stage(stage, [&] {
        Common c = synth_c;
        PipelineConfig base = c.config_value();
        if (identities) base.identities = *identities;
        if (distractors) base.distractors = *distractors;
        base.validate();
        return base;
      });
      stage_synth(cfg, synth_out, from_dir, synth_c.jobs_value(), produced);
      print_produced(out, produced);
    } else if (build->parsed()) {
      stage = "build-repset";
      const PipelineConfig cfg = in_stage(stage, [&] { return build_c.config_value(); });
      stage_build_repset(cfg, build_pairs, build_out, build_c.jobs_value(), produced);
      print_produced(out, produced);
    } else if (represent->parsed()) {
      stage = "represent";
      const PipelineConfig cfg = in_stage(stage, [&] { return rep_c.config_value(); });
      const Modality m = in_stage(stage, [&] { return parse_modality(rep_modality); });
      stage_represent(cfg, rep_repset, m, rep_in, rep_out, rep_c.jobs_value(), err, produced);
      print_produced(out, produced);
    } else if (match->parsed()) {
      stage = "match";
      stage_match(match_probes, match_gallery, match_out, match_maps, match_repset, match_c.jobs_value(), produced);
      print_produced(out, produced);
    } else if (fuse_train->parsed()) {
      stage = "fuse-train";
      const PipelineConfig cfg = in_stage(stage, [&] {
        PipelineConfig c = fuse_c.config_value();
        if (!fuse_method.empty()) set_config_value(c, "fusion", fuse_method);
        if (fuse_nu) c.nu = *fuse_nu;
        c.validate();
        return c;
      });
      stage_fuse_train(cfg, fuse_scores, fuse_labels, fuse_out, err, produced);
      print_produced(out, produced);
    } else if (eval->parsed()) {
      stage = "evaluate";
      const PipelineConfig cfg = in_stage(stage, [&] {
        PipelineConfig c = eval_c.config_value();
        if (ev_ranks) c.ranks = parse_int_list(*ev_ranks);
        if (ev_far) c.far = *ev_far;
        c.validate();
        return c;
      });
      ev.scores = ev_scores;
      ev.labels = ev_labels;
      ev.model = ev_model;
      ev.distractor_scores = ev_dist;
      ev.out = ev_out;
      const auto summary = stage_evaluate(cfg, ev, eval_c.jobs_value(), produced);
      out << summary.dump(2) << '\n';
    } else if (pipeline->parsed()) {
      stage = "pipeline";
      const PipelineConfig cfg = in_stage(stage, [&] {
        PipelineConfig c = pipe_c.config_value();
        if (pipe_distractors) c.distractors = *pipe_distractors;
        c.validate();
        return c;
      });
      run_pipeline_command(cfg, pipe_out, pipe_c.jobs_value(), out, err);
    }
  } catch (const StageError& e) {
    err << "ghfr: stage '" << e.stage << "' failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "ghfr: stage '" << stage << "' failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ghfr
