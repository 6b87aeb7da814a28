#include "ghfr/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ghfr/error.hpp"

namespace ghfr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>)
      v = std::stod(value, &used);
    else if constexpr (std::is_same_v<T, std::uint64_t>)
      v = std::stoull(value, &used);
    else
      v = static_cast<T>(std::stoll(value, &used));
    if (used != value.size()) throw std::invalid_argument("trailing");
    if constexpr (std::is_same_v<T, std::uint64_t>)
      if (value.front() == '-') throw std::invalid_argument("negative");
    return v;
  } catch (const std::exception&) {
    throw Error("config: bad value '" + value + "' for '" + key + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("config: bad boolean '" + value + "' for '" + key + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw Error("bad integer list '" + text + "'");
    out.push_back(parse_number<int>("list", item));
  }
  if (out.empty()) throw Error("empty integer list");
  return out;
}

void PipelineConfig::validate() const {
  if (identities < 1) throw Error("config: identities must be >= 1");
  if (splits.representation < 1 || splits.train < 1 || splits.test < 1)
    throw Error("config: every split must hold at least one identity");
  if (splits.representation + splits.train + splits.test > static_cast<std::size_t>(identities))
    throw Error("config: split sizes exceed identities");
  if (distractors < 0) throw Error("config: distractors must be >= 0");
  if (width < 1 || height < 1) throw Error("config: image size must be positive");
  if (patch_size < 10) throw Error("config: patch_size must be >= 10");
  if (step < 1 || step > patch_size) throw Error("config: step must lie in [1, patch_size]");
  if (patch_size > width || patch_size > height) throw Error("config: patch_size exceeds the image");
  if (region < 1) throw Error("config: region must be >= 1");
  if (stride < 1) throw Error("config: stride must be >= 1");
  if (!std::isfinite(alpha) || alpha < 0.0) throw Error("config: alpha must be finite and >= 0");
  if (K.empty()) throw Error("config: K list is empty");
  for (int k : K)
    if (k < 1) throw Error("config: every K must be >= 1");
  if (std::set<int>(K.begin(), K.end()).size() != K.size()) throw Error("config: repeated K value");
  if (kinds.empty()) throw Error("config: no descriptor kinds");
  if (std::set<DescriptorKind>(kinds.begin(), kinds.end()).size() != kinds.size())
    throw Error("config: repeated descriptor kind");
  if (max_sweeps < 1) throw Error("config: max_sweeps must be >= 1");
  if (!(tol > 0.0)) throw Error("config: tol must be > 0");
  if (!(nu == 0.0 || (nu > 0.0 && nu <= 1.0))) throw Error("config: nu must be 0 (auto) or lie in (0,1]");
  if (ranks.empty()) throw Error("config: no ranks");
  for (int r : ranks)
    if (r < 1) throw Error("config: ranks must be >= 1");
  if (!(far > 0.0 && far < 1.0)) throw Error("config: far must lie in (0,1)");
  synth().validate();
  solver(K.front()).validate();
}

SolverParams PipelineConfig::solver(int k) const {
  SolverParams p;
  p.alpha = alpha;
  p.K = k;
  p.max_sweeps = max_sweeps;
  p.tol = tol;
  p.region = region;
  p.stride = stride;
  return p;
}

SynthConfig PipelineConfig::synth() const {
  SynthConfig s;
  s.seed = seed;
  s.identities = identities;
  s.width = width;
  s.height = height;
  s.sigma1 = sigma1;
  s.sigma2 = sigma2;
  s.invert = invert;
  s.max_shift = max_shift;
  s.noise_sigma = noise_sigma;
  s.splits = splits;
  s.distractors = distractors;
  return s;
}

FusionParams PipelineConfig::fusion_params() const {
  FusionParams p;
  p.method = fusion;
  if (nu > 0.0) p.nu = nu;
  return p;
}

std::vector<int> PipelineConfig::effective_K(std::size_t M) const {
  std::vector<int> out;
  for (int k : K)
    if (static_cast<std::size_t>(k) <= M) out.push_back(k);
  std::sort(out.begin(), out.end());
  if (out.empty())
    throw Error("config: no K value fits a representation set of " + std::to_string(M) + " pairs");
  return out;
}

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  if (value.empty()) throw Error("config: empty value for '" + key + "'");
  if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "identities") c.identities = parse_number<int>(key, value);
  else if (key == "representation") c.splits.representation = parse_number<std::size_t>(key, value);
  else if (key == "train") c.splits.train = parse_number<std::size_t>(key, value);
  else if (key == "test") c.splits.test = parse_number<std::size_t>(key, value);
  else if (key == "distractors") c.distractors = parse_number<int>(key, value);
  else if (key == "width") c.width = parse_number<int>(key, value);
  else if (key == "height") c.height = parse_number<int>(key, value);
  else if (key == "patch_size") c.patch_size = parse_number<int>(key, value);
  else if (key == "step") c.step = parse_number<int>(key, value);
  else if (key == "region") c.region = parse_number<int>(key, value);
  else if (key == "stride") c.stride = parse_number<int>(key, value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "K") c.K = parse_int_list(value);
  else if (key == "kinds") c.kinds = parse_descriptor_list(value);
  else if (key == "max_sweeps") c.max_sweeps = parse_number<int>(key, value);
  else if (key == "tol") c.tol = parse_number<double>(key, value);
  else if (key == "fusion") {
    if (value == "svm") c.fusion = FusionMethod::OneClassSvm;
    else if (value == "mean") c.fusion = FusionMethod::Mean;
    else throw Error("config: fusion must be 'svm' or 'mean'");
  } else if (key == "nu") c.nu = value == "auto" ? 0.0 : parse_number<double>(key, value);
  else if (key == "ranks") c.ranks = parse_int_list(value);
  else if (key == "far") c.far = parse_number<double>(key, value);
  else if (key == "probe_modality") c.probe_modality = parse_modality(value);
  else if (key == "sigma1") c.sigma1 = parse_number<double>(key, value);
  else if (key == "sigma2") c.sigma2 = parse_number<double>(key, value);
  else if (key == "invert") c.invert = parse_bool(key, value);
  else if (key == "max_shift") c.max_shift = parse_number<double>(key, value);
  else if (key == "noise_sigma") c.noise_sigma = parse_number<double>(key, value);
  else throw Error("config: unknown key '" + key + "'");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": missing key");
    if (!seen.insert(key).second) throw Error("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    try {
      set_config_value(c, key, value);
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const PipelineConfig& c) {
  std::ostringstream out;
  const auto ints = [](int v) { return std::to_string(v); };
  out << "seed = " << c.seed << '\n'
      << "identities = " << c.identities << '\n'
      << "representation = " << c.splits.representation << '\n'
      << "train = " << c.splits.train << '\n'
      << "test = " << c.splits.test << '\n'
      << "distractors = " << c.distractors << '\n'
      << "width = " << c.width << '\n'
      << "height = " << c.height << '\n'
      << "patch_size = " << c.patch_size << '\n'
      << "step = " << c.step << '\n'
      << "region = " << c.region << '\n'
      << "stride = " << c.stride << '\n'
      << "alpha = " << fmt(c.alpha) << '\n'
      << "K = " << join(c.K, ints) << '\n'
      << "kinds = " << join(c.kinds, [](DescriptorKind k) { return std::string(to_string(k)); }) << '\n'
      << "max_sweeps = " << c.max_sweeps << '\n'
      << "tol = " << fmt(c.tol) << '\n'
      << "fusion = " << (c.fusion == FusionMethod::Mean ? "mean" : "svm") << '\n'
      << "nu = " << (c.nu == 0.0 ? std::string("auto") : fmt(c.nu)) << '\n'
      << "ranks = " << join(c.ranks, ints) << '\n'
      << "far = " << fmt(c.far) << '\n'
      << "probe_modality = " << to_string(c.probe_modality) << '\n'
      << "sigma1 = " << fmt(c.sigma1) << '\n'
      << "sigma2 = " << fmt(c.sigma2) << '\n'
      << "invert = " << (c.invert ? "true" : "false") << '\n'
      << "max_shift = " << fmt(c.max_shift) << '\n'
      << "noise_sigma = " << fmt(c.noise_sigma) << '\n';
  return out.str();
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) { return dump_config(a) == dump_config(b); }

}  // namespace ghfr
