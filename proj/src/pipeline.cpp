#include "ghfr/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ghfr/error.hpp"
#include "ghfr/mrf_weights.hpp"
#include "ghfr/parallel.hpp"
#include "ghfr/synthgen.hpp"

namespace ghfr {

Representer::Representer(const RepresentationSet& rs, const PipelineConfig& cfg)
    : rs_(rs), cfg_(cfg), Ks_(cfg.effective_K(rs.size())) {
  if (!(rs.grid() == cfg.grid())) throw Error("representation set geometry differs from the configuration");
  for (DescriptorKind kind : cfg.kinds)
    if (!rs.has_kind(kind))
      throw Error("representation set lacks '" + std::string(to_string(kind)) + "' features");
  keys_ = metric_keys(cfg.kinds, Ks_);
}

RepresentationBundle Representer::represent(const GrayImage& img, Modality m) const {
  const GrayImage norm = normalize_geometry(img, cfg_.width, cfg_.height);
  const auto M = static_cast<std::uint32_t>(rs_.size());
  RepresentationBundle out;
  for (DescriptorKind kind : cfg_.kinds) {
    WeightSolver solver(build_problems(norm, rs_, m, kind, cfg_.solver(Ks_.back())), rs_.grid().adjacency());
    for (int K : Ks_) out[{kind, K}] = to_sparse(solver.solve(cfg_.solver(K)), M);
  }
  return out;
}

std::vector<RepresentationBundle> represent_all(const Representer& rep, std::span<const GrayImage> images,
                                                Modality m, int jobs) {
  std::vector<RepresentationBundle> out(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) { out[i] = rep.represent(images[i], m); });
  return out;
}

ScoreTable score_all_pairs(std::span<const std::string> probe_ids, std::span<const RepresentationBundle> probes,
                           std::span<const std::string> gallery_ids, std::span<const RepresentationBundle> gallery,
                           std::span<const MetricKey> keys, int jobs) {
  if (probe_ids.size() != probes.size() || gallery_ids.size() != gallery.size())
    throw Error("match: ids and representations differ in count");
  ScoreTable t;
  t.keys.assign(keys.begin(), keys.end());
  t.rows.resize(probes.size() * gallery.size());
  parallel_for(probes.size(), jobs, [&](std::size_t p) {
    for (std::size_t g = 0; g < gallery.size(); ++g)
      t.rows[p * gallery.size() + g] = {probe_ids[p], gallery_ids[g], score_vector(probes[p], gallery[g], keys)};
  });
  return t;
}

LabelMap read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels '" + path.string() + "'");
  LabelMap labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, identity, extra;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, identity, '\t') || std::getline(ss, extra, '\t') ||
        id.empty() || identity.empty())
      throw Error("labels '" + path.string() + "': expected 'image_id<TAB>identity' lines");
    if (!labels.emplace(id, identity).second) throw Error("labels '" + path.string() + "': repeated id '" + id + "'");
  }
  return labels;
}

namespace {

const std::string& identity_of(const LabelMap& labels, const std::string& id) {
  const auto it = labels.find(id);
  if (it == labels.end()) throw Error("no identity label for image '" + id + "'");
  return it->second;
}

// Row index for every (probe, gallery) cell; every cell must occur once.
struct Layout {
  std::vector<std::string> probes;
  std::vector<std::string> gallery;
  std::vector<std::size_t> cell_row;  // probes x gallery
};

Layout layout_of(const ScoreTable& table) {
  Layout l;
  std::map<std::string, std::size_t> pi, gi;
  for (const auto& r : table.rows) {
    if (pi.emplace(r.probe_id, l.probes.size()).second) l.probes.push_back(r.probe_id);
    if (gi.emplace(r.gallery_id, l.gallery.size()).second) l.gallery.push_back(r.gallery_id);
  }
  if (l.probes.empty()) throw Error("score table is empty");
  const std::size_t none = table.rows.size();
  l.cell_row.assign(l.probes.size() * l.gallery.size(), none);
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    std::size_t& cell = l.cell_row[pi[table.rows[k].probe_id] * l.gallery.size() + gi[table.rows[k].gallery_id]];
    if (cell != none) throw Error("score table repeats the pair (" + table.rows[k].probe_id + ", " +
                                  table.rows[k].gallery_id + ")");
    cell = k;
  }
  for (std::size_t c : l.cell_row)
    if (c == none) throw Error("score table does not cover every probe/gallery pair");
  return l;
}

template <typename Value>
MatchMatrix arrange(const ScoreTable& table, const LabelMap& labels, Value value) {
  const Layout l = layout_of(table);
  MatchMatrix mm;
  for (const auto& p : l.probes) mm.probe_labels.push_back(identity_of(labels, p));
  for (const auto& g : l.gallery) mm.gallery_labels.push_back(identity_of(labels, g));
  mm.scores.reserve(l.cell_row.size());
  for (std::size_t row : l.cell_row) mm.scores.push_back(value(table.rows[row]));
  mm.validate();
  return mm;
}

}  // namespace

std::vector<LabeledScore> label_scores(const ScoreTable& table, const LabelMap& labels) {
  std::vector<LabeledScore> out;
  out.reserve(table.rows.size());
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& r = table.rows[k];
    out.push_back({k, identity_of(labels, r.probe_id) == identity_of(labels, r.gallery_id), r.values});
  }
  return out;
}

std::vector<std::size_t> column_order(const ScoreTable& table, std::span<const std::string> ordering) {
  std::vector<std::size_t> cols;
  for (const auto& label : ordering) {
    std::size_t c = 0;
    while (c < table.keys.size() && metric_label(table.keys[c]) != label) ++c;
    if (c == table.keys.size()) throw Error("score table has no column '" + label + "'");
    cols.push_back(c);
  }
  return cols;
}

MatchMatrix fused_matrix(const ScoreTable& table, const FusionModel& model, const LabelMap& labels) {
  const auto cols = column_order(table, model.ordering);
  std::vector<double> s(cols.size());
  return arrange(table, labels, [&](const ScoreRow& r) {
    for (std::size_t d = 0; d < cols.size(); ++d) s[d] = r.values[cols[d]];
    return fuse(model, s);
  });
}

MatchMatrix metric_matrix(const ScoreTable& table, std::size_t column, const LabelMap& labels) {
  if (column >= table.keys.size()) throw Error("metric column out of range");
  return arrange(table, labels, [&](const ScoreRow& r) { return r.values[column]; });
}

FusionModel train_fusion(const PipelineConfig& cfg, const ScoreTable& table, const LabelMap& labels,
                         bool* fell_back) {
  std::vector<std::string> ordering;
  for (const auto& k : table.keys) ordering.push_back(metric_label(k));
  if (fell_back) *fell_back = false;
  const auto scored = label_scores(table, labels);
  const TrainingSet set = select_training_pairs(scored);
  try {
    return train(cfg.fusion_params(), set, ordering);
  } catch (const Error& e) {
    if (std::string(e.what()).find("degenerate") == std::string::npos) throw;
    if (fell_back) *fell_back = true;
    return mean_model(ordering);
  }
}

SyntheticData synthesize(const PipelineConfig& cfg, int jobs) {
  const SynthConfig sc = cfg.synth();
  sc.validate();
  SyntheticData d;
  const auto n = static_cast<std::size_t>(sc.identities);
  d.ids.resize(n);
  d.a.resize(n);
  d.b.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    d.ids[i] = identity_name(static_cast<int>(i));
    d.a[i] = generate_identity(sc, static_cast<int>(i));
    d.b[i] = generate_modality_b(sc, static_cast<int>(i));
  });
  d.partition = random_partition(d.ids, sc.splits, sc.seed);
  const auto nd = static_cast<std::size_t>(sc.distractors);
  d.distractor_ids.resize(nd);
  d.distractors.resize(nd);
  parallel_for(nd, jobs, [&](std::size_t k) {
    d.distractor_ids[k] = distractor_name(static_cast<int>(k));
    d.distractors[k] = generate_distractor(sc, static_cast<int>(k));
  });
  return d;
}

namespace {

struct Side {
  std::vector<std::string> ids;
  std::vector<GrayImage> images;
};

Side select(const SyntheticData& d, const std::vector<std::string>& ids, Modality m) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < d.ids.size(); ++i) index[d.ids[i]] = i;
  Side s;
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error("unknown identity '" + id + "'");
    s.ids.push_back(id);
    s.images.push_back(m == Modality::A ? d.a[it->second] : d.b[it->second]);
  }
  return s;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const SyntheticData& data, const Partition& part, int jobs) {
  cfg.validate();
  const Modality probe_m = cfg.probe_modality;
  const Modality gallery_m = probe_m == Modality::A ? Modality::B : Modality::A;

  std::vector<ImagePair> pairs;
  {
    const Side a = select(data, part.representation, Modality::A);
    const Side b = select(data, part.representation, Modality::B);
    for (std::size_t i = 0; i < a.ids.size(); ++i) pairs.push_back({a.ids[i], a.images[i], b.images[i]});
  }
  const RepresentationSet rs = build_repset(pairs, cfg.grid(), cfg.kinds, jobs);
  const Representer rep(rs, cfg);

  PipelineResult r;
  r.keys = rep.keys();
  LabelMap labels;
  for (const auto& id : data.ids) labels[id] = id;
  for (const auto& id : data.distractor_ids) labels[id] = id;

  const auto score_split = [&](const std::vector<std::string>& ids) {
    const Side probes = select(data, ids, probe_m);
    const Side gallery = select(data, ids, gallery_m);
    const auto pr = represent_all(rep, probes.images, probe_m, jobs);
    const auto gr = represent_all(rep, gallery.images, gallery_m, jobs);
    return std::pair{score_all_pairs(probes.ids, pr, gallery.ids, gr, r.keys, jobs), pr};
  };

  r.train_scores = score_split(part.train).first;
  auto [test_scores, test_probe_reps] = score_split(part.test);
  r.test_scores = std::move(test_scores);

  r.model = train_fusion(cfg, r.train_scores, labels, &r.fusion_fell_back);
  r.fused = fused_matrix(r.test_scores, r.model, labels);
  r.metrics = evaluate(r.fused, cfg.ranks, cfg.far, jobs);
  r.mate_ranks = mate_ranks(r.fused, jobs);

  for (std::size_t c = 0; c < r.keys.size(); ++c)
    r.single_rank1.push_back(cmc(metric_matrix(r.test_scores, c, labels), jobs).at(1));

  double gsum = 0.0, isum = 0.0;
  std::size_t gn = 0, in = 0;
  for (const auto& row : r.test_scores.rows) {
    double mean = 0.0;
    for (double v : row.values) mean += v / static_cast<double>(row.values.size());
    if (labels[row.probe_id] == labels[row.gallery_id]) {
      gsum += mean;
      ++gn;
    } else {
      isum += mean;
      ++in;
    }
  }
  r.genuine_mean = gn ? gsum / static_cast<double>(gn) : 0.0;
  r.impostor_mean = in ? isum / static_cast<double>(in) : 0.0;

  if (!data.distractors.empty()) {
    const auto dr = represent_all(rep, data.distractors, gallery_m, jobs);
    const Side probes = select(data, part.test, probe_m);
    r.distractor_scores = score_all_pairs(probes.ids, test_probe_reps, data.distractor_ids, dr, r.keys, jobs);
    const MatchMatrix dm = fused_matrix(r.distractor_scores, r.model, labels);
    r.populated = populate_gallery(r.fused, dm.gallery_labels, dm.scores);
    r.populated_metrics = evaluate(r.populated, cfg.ranks, cfg.far, jobs);
    r.populated_ranks = mate_ranks(r.populated, jobs);
  }
  return r;
}

Metrics summarize(const PipelineResult& r) {
  Metrics m;
  for (const auto& [rank, acc] : r.metrics.rank_accuracy) m["rank" + std::to_string(rank)] = acc;
  m["vr_at_far"] = r.metrics.vr;
  m["best_single_rank1"] = r.single_rank1.empty() ? 0.0 : *std::max_element(r.single_rank1.begin(), r.single_rank1.end());
  m["genuine_mean"] = r.genuine_mean;
  m["impostor_mean"] = r.impostor_mean;
  if (!r.populated.scores.empty())
    for (const auto& [rank, acc] : r.populated_metrics.rank_accuracy)
      m["populated_rank" + std::to_string(rank)] = acc;
  return m;
}

}  // namespace ghfr
