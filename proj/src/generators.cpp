#include "driftlens/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "driftlens/error.hpp"
#include "driftlens/random.hpp"

namespace driftlens {

namespace {

Dataset grid_dataset(std::vector<std::string> names, std::vector<std::vector<double>> rows) {
  const auto grid = uniform_time_grid(rows.size());
  std::vector<TimedSample> samples(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) samples[i] = {std::move(rows[i]), grid[i]};
  return Dataset(std::move(names), std::move(samples));
}

std::vector<std::vector<double>> rows_of(const Dataset& ds) {
  std::vector<std::vector<double>> rows(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rows[i] = ds[i].features;
  return rows;
}

Dataset with_rows(const Dataset& ds, std::vector<std::vector<double>> rows) {
  std::vector<TimedSample> samples(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) samples[i] = {std::move(rows[i]), ds.time(i)};
  Dataset out(ds.feature_names(), std::move(samples), ds.time_origin(), ds.time_scale());
  if (const auto* s = ds.standardization()) out.set_standardization(*s);
  return out;
}

// ---- base generators ----

Dataset gen_agrawal(std::size_t n, std::uint64_t seed, int function) {
  require(function >= 1 && function <= 3, ErrorCode::kInvalidArgument, "agrawal function must be 1, 2 or 3");
  Rng rng(seed);
  std::vector<std::vector<double>> rows(n);
  for (auto& row : rows) {
    const double salary = rng.uniform(20000.0, 150000.0);
    const double commission = salary >= 75000.0 ? 0.0 : rng.uniform(10000.0, 75000.0);
    const double age = static_cast<double>(rng.between(20, 80));
    const double elevel = static_cast<double>(rng.between(0, 4));
    const double car = static_cast<double>(rng.between(1, 20));
    const double zipcode = static_cast<double>(rng.between(0, 8));
    const double hvalue = (9.0 - zipcode) * 100000.0 * rng.uniform(0.5, 1.5);
    const double hyears = static_cast<double>(rng.between(1, 30));
    const double loan = rng.uniform(0.0, 500000.0);
    row = {salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan, 0.0};
    row.back() = agrawal_label(function, row);
  }
  return grid_dataset({"salary", "commission", "age", "elevel", "car", "zipcode", "hvalue", "hyears", "loan", "label"},
                      std::move(rows));
}

Dataset gen_mixed(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows(n);
  for (auto& row : rows) {
    const bool v = rng.uniform() < 0.5;
    const bool w = rng.uniform() < 0.5;
    const double x = rng.uniform();
    const double y = rng.uniform();
    const bool z = y < 0.5 + 0.3 * std::sin(3.0 * std::numbers::pi * x);
    const int votes = int(v) + int(w) + int(z);
    row = {double(v), double(w), x, y, votes >= 2 ? 1.0 : 0.0};
  }
  return grid_dataset({"v", "w", "x", "y", "label"}, std::move(rows));
}

Dataset gen_random_rbf(std::size_t n, std::uint64_t seed, const BaseOptions& o) {
  require(o.rbf_centroids >= 1 && o.rbf_features >= 1, ErrorCode::kInvalidArgument,
          "random_rbf needs at least one centroid and one feature");
  require(o.rbf_spread >= 0.0, ErrorCode::kInvalidArgument, "random_rbf spread must be >= 0");
  const auto d = static_cast<std::size_t>(o.rbf_features);
  struct Centroid {
    std::vector<double> centre;
    int label;
    double spread;
    double weight;
  };
  Rng model_rng(derive_seed(seed, 0));
  std::vector<Centroid> centroids(static_cast<std::size_t>(o.rbf_centroids));
  double total = 0.0;
  for (auto& c : centroids) {
    c.centre.resize(d);
    for (auto& v : c.centre) v = model_rng.uniform();
    c.label = static_cast<int>(model_rng.below(2));
    c.spread = model_rng.uniform() * o.rbf_spread;
    c.weight = model_rng.uniform() + 1e-12;
    total += c.weight;
  }
  Rng rng(derive_seed(seed, 1));
  std::vector<std::vector<double>> rows(n);
  std::vector<double> dir(d);
  for (auto& row : rows) {
    double pick = rng.uniform() * total;
    std::size_t k = 0;
    while (k + 1 < centroids.size() && pick >= centroids[k].weight) pick -= centroids[k++].weight;
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double magnitude = rng.normal() * centroids[k].spread;
    row.resize(d + 1);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = centroids[k].centre[j] + (norm > 0.0 && magnitude != 0.0 ? dir[j] / norm * magnitude : 0.0);
    }
    row[d] = centroids[k].label;
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  names.push_back("label");
  return grid_dataset(std::move(names), std::move(rows));
}

// Random decision tree over 5 uniform numeric and 5 five-valued categorical
// features; leaves appear from depth 3 on with probability 0.15 per level.
struct RandomTreeNode {
  int feature = -1;
  double threshold = 0.0;
  int label = 0;
  int left = -1;
  int right = -1;
};

constexpr int kTreeNumeric = 5;
constexpr int kTreeCategorical = 5;
constexpr int kTreeCategories = 5;

int grow_random_tree(std::vector<RandomTreeNode>& nodes, Rng& rng, int depth) {
  const int id = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (depth >= 5 || (depth >= 3 && rng.uniform() < 0.15)) {
    nodes[id].label = static_cast<int>(rng.below(2));
    return id;
  }
  const int feature = static_cast<int>(rng.below(kTreeNumeric + kTreeCategorical));
  nodes[id].feature = feature;
  nodes[id].threshold = feature < kTreeNumeric ? rng.uniform() : static_cast<double>(rng.below(kTreeCategories));
  const int left = grow_random_tree(nodes, rng, depth + 1);
  const int right = grow_random_tree(nodes, rng, depth + 1);
  nodes[id].left = left;
  nodes[id].right = right;
  return id;
}

Dataset gen_random_tree(std::size_t n, std::uint64_t seed) {
  Rng model_rng(derive_seed(seed, 0));
  std::vector<RandomTreeNode> nodes;
  grow_random_tree(nodes, model_rng, 0);
  Rng rng(derive_seed(seed, 1));
  std::vector<std::vector<double>> rows(n);
  for (auto& row : rows) {
    row.resize(kTreeNumeric + kTreeCategorical + 1);
    for (int j = 0; j < kTreeNumeric; ++j) row[j] = rng.uniform();
    for (int j = 0; j < kTreeCategorical; ++j) row[kTreeNumeric + j] = static_cast<double>(rng.below(kTreeCategories));
    int at = 0;
    while (nodes[at].feature >= 0) {
      const auto& node = nodes[at];
      const double v = row[node.feature];
      const bool left = node.feature < kTreeNumeric ? v < node.threshold : v == node.threshold;
      at = left ? node.left : node.right;
    }
    row.back() = nodes[at].label;
  }
  std::vector<std::string> names;
  for (int j = 0; j < kTreeNumeric; ++j) names.push_back("num" + std::to_string(j));
  for (int j = 0; j < kTreeCategorical; ++j) names.push_back("cat" + std::to_string(j));
  names.push_back("label");
  return grid_dataset(std::move(names), std::move(rows));
}

Dataset gen_gaussian_blobs(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::array<double, 2>, 3> kCentres{{{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}}};
  Rng rng(seed);
  std::vector<std::vector<double>> rows(n);
  for (auto& row : rows) {
    const std::size_t k = rng.below(kCentres.size());
    const double x = rng.normal(kCentres[k][0], 0.5);
    const double y = rng.normal(kCentres[k][1], 0.5);
    row = {x, y, static_cast<double>(k)};
  }
  return grid_dataset({"x0", "x1", "label"}, std::move(rows));
}

// ---- Bayes nets ----

constexpr std::size_t kHidden = 8;

// in -> 8 tanh -> 8 tanh -> (mean, raw sigma)
struct NodeNet {
  std::size_t in = 0;
  std::vector<double> w1, b1, w2, b2, w3, b3;

  NodeNet(std::size_t inputs, std::uint64_t seed) : in(inputs) {
    Rng rng(seed);
    auto draw = [&](std::vector<double>& v, std::size_t count) {
      v.resize(count);
      for (auto& x : v) x = rng.normal();
    };
    draw(w1, kHidden * in);
    draw(b1, kHidden);
    draw(w2, kHidden * kHidden);
    draw(b2, kHidden);
    draw(w3, 2 * kHidden);
    draw(b3, 2);
  }

  std::pair<double, double> operator()(std::span<const double> x) const {
    std::array<double, kHidden> h1{}, h2{};
    for (std::size_t k = 0; k < kHidden; ++k) {
      double s = b1[k];
      for (std::size_t j = 0; j < in; ++j) s += w1[k * in + j] * x[j];
      h1[k] = std::tanh(s);
    }
    for (std::size_t k = 0; k < kHidden; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < kHidden; ++j) s += w2[k * kHidden + j] * h1[j];
      h2[k] = std::tanh(s);
    }
    double mean = b3[0], raw = b3[1];
    for (std::size_t j = 0; j < kHidden; ++j) {
      mean += w3[j] * h2[j];
      raw += w3[kHidden + j] * h2[j];
    }
    const double softplus = raw > 30.0 ? raw : std::log1p(std::exp(raw));
    return {mean, softplus + 0.1};
  }
};

std::vector<std::vector<std::size_t>> children_of(const BayesNetSpec& spec) {
  std::vector<std::vector<std::size_t>> children(spec.nodes.size());
  for (std::size_t v = 0; v < spec.nodes.size(); ++v) {
    for (auto p : spec.nodes[v].parents) children[p].push_back(v);
  }
  return children;
}

}  // namespace

// ---- LabeledStream ----

nlohmann::json LabeledStream::truth_json() const {
  nlohmann::json j;
  j["drifting_features"] = drifting_features;
  j["feature_names"] = dataset.feature_names();
  j["change_point"] = change_point ? nlohmann::json(*change_point) : nlohmann::json(nullptr);
  j["provenance"] = provenance;
  if (!shallow_features.empty()) j["shallow_features"] = shallow_features;
  return j;
}

LabeledStream truth_from_json(const nlohmann::json& j) {
  LabeledStream s;
  try {
    s.drifting_features = j.at("drifting_features").get<std::vector<bool>>();
    if (j.contains("change_point") && !j["change_point"].is_null()) s.change_point = j["change_point"].get<double>();
    if (j.contains("provenance")) s.provenance = j["provenance"];
    if (j.contains("shallow_features")) s.shallow_features = j["shallow_features"].get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad truth file: ") + e.what());
  }
  return s;
}

// ---- base ----

std::string base_kind_name(BaseKind kind) {
  switch (kind) {
    case BaseKind::kAgrawal: return "agrawal";
    case BaseKind::kMixed: return "mixed";
    case BaseKind::kRandomRbf: return "random_rbf";
    case BaseKind::kRandomTree: return "random_tree";
    case BaseKind::kGaussianBlobs: return "gaussian_blobs";
  }
  return "unknown";
}

BaseKind parse_base_kind(const std::string& name) {
  if (name == "agrawal") return BaseKind::kAgrawal;
  if (name == "mixed") return BaseKind::kMixed;
  if (name == "random_rbf" || name == "rbf") return BaseKind::kRandomRbf;
  if (name == "random_tree") return BaseKind::kRandomTree;
  if (name == "gaussian_blobs" || name == "blobs") return BaseKind::kGaussianBlobs;
  fail(ErrorCode::kUnknownKind, "unknown base generator '" + name + "'");
}

int agrawal_label(int function, std::span<const double> row) {
  require(row.size() >= 9, ErrorCode::kDimensionMismatch, "agrawal rows have 9 attributes");
  const double salary = row[0], age = row[2], elevel = row[3];
  switch (function) {
    case 1: return age < 40 || age >= 60;
    case 2:
      if (age < 40) return salary >= 50000 && salary <= 100000;
      if (age < 60) return salary >= 75000 && salary <= 125000;
      return salary >= 25000 && salary <= 75000;
    case 3:
      if (age < 40) return elevel == 0 || elevel == 1;
      if (age < 60) return elevel >= 1 && elevel <= 3;
      return elevel >= 2 && elevel <= 4;
    default: fail(ErrorCode::kInvalidArgument, "agrawal function must be 1, 2 or 3");
  }
}

Dataset gen_base(BaseKind kind, std::size_t n, std::uint64_t seed, const BaseOptions& options) {
  require(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  switch (kind) {
    case BaseKind::kAgrawal: return gen_agrawal(n, seed, options.agrawal_function);
    case BaseKind::kMixed: return gen_mixed(n, seed);
    case BaseKind::kRandomRbf: return gen_random_rbf(n, seed, options);
    case BaseKind::kRandomTree: return gen_random_tree(n, seed);
    case BaseKind::kGaussianBlobs: return gen_gaussian_blobs(n, seed);
  }
  fail(ErrorCode::kUnknownKind, "unknown base generator");
}

// ---- perturbation ----

Perturbation Perturbation::parse(const std::string& text) {
  Perturbation p;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  if (head == "zero" || head == "constant") {
    p.kind = Kind::kZero;
  } else if (head == "shift") {
    p.kind = Kind::kShift;
    if (colon != std::string::npos) {
      try {
        std::size_t used = 0;
        p.delta = std::stod(text.substr(colon + 1), &used);
        require(used == text.size() - colon - 1, ErrorCode::kParse, "bad shift '" + text + "'");
      } catch (const std::logic_error&) {
        fail(ErrorCode::kParse, "bad shift '" + text + "'");
      }
    }
  } else if (head == "gaussian_noise" || head == "noise") {
    p.kind = Kind::kGaussianNoise;
  } else if (head == "value_permutation" || head == "permute" || head == "permutation") {
    p.kind = Kind::kValuePermutation;
  } else {
    fail(ErrorCode::kUnknownKind, "unknown perturbation '" + text + "'");
  }
  return p;
}

std::string Perturbation::to_string() const {
  switch (kind) {
    case Kind::kZero: return "zero";
    case Kind::kShift: {
      std::ostringstream os;
      os << std::setprecision(15) << delta;
      return "shift:" + os.str();
    }
    case Kind::kGaussianNoise: return "gaussian_noise";
    case Kind::kValuePermutation: return "value_permutation";
  }
  return "unknown";
}

LabeledStream perturb(const Dataset& ds, const Perturbation& p, std::size_t n_features, std::uint64_t seed) {
  require(!ds.empty(), ErrorCode::kEmptyDataset, "cannot perturb an empty dataset");
  require(n_features >= 1, ErrorCode::kInvalidArgument, "n_features must be >= 1");
  require(n_features <= ds.feature_count(), ErrorCode::kTooManyFeatures,
          "cannot perturb " + std::to_string(n_features) + " of " + std::to_string(ds.feature_count()) + " features");
  Rng rng(seed);
  const double cp = rng.uniform(1.0 / 3.0, 2.0 / 3.0);
  auto chosen = rng.sample_without_replacement(ds.feature_count(), n_features);
  std::sort(chosen.begin(), chosen.end());

  std::size_t first = 0;
  while (first < ds.size() && ds.time(first) < cp) ++first;
  auto rows = rows_of(ds);
  for (auto j : chosen) {
    switch (p.kind) {
      case Perturbation::Kind::kZero:
        for (std::size_t i = first; i < rows.size(); ++i) rows[i][j] = 0.0;
        break;
      case Perturbation::Kind::kShift:
        for (std::size_t i = first; i < rows.size(); ++i) rows[i][j] += p.delta;
        break;
      case Perturbation::Kind::kGaussianNoise:
        for (std::size_t i = first; i < rows.size(); ++i) rows[i][j] += rng.normal();
        break;
      case Perturbation::Kind::kValuePermutation: {
        std::vector<double> values;
        for (std::size_t i = first; i < rows.size(); ++i) values.push_back(rows[i][j]);
        rng.shuffle(values);
        for (std::size_t i = first; i < rows.size(); ++i) rows[i][j] = values[i - first];
        break;
      }
    }
  }

  LabeledStream out;
  out.dataset = with_rows(ds, std::move(rows));
  out.drifting_features.assign(ds.feature_count(), false);
  for (auto j : chosen) out.drifting_features[j] = true;
  out.change_point = cp;
  out.provenance = {{"generator", "perturb"},
                    {"perturbation", p.to_string()},
                    {"n_features", n_features},
                    {"features", chosen},
                    {"seed", seed}};
  return out;
}

Dataset shuffle_baseline(const Dataset& ds, std::uint64_t seed) {
  Rng rng(seed);
  const auto order = rng.permutation(ds.size());
  std::vector<std::vector<double>> rows(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rows[i] = ds[order[i]].features;
  Dataset out = grid_dataset(ds.feature_names(), std::move(rows));
  if (const auto* s = ds.standardization()) out.set_standardization(*s);
  return out;
}

// ---- Bayes nets ----

std::vector<std::size_t> topological_order(const BayesNetSpec& spec) {
  const std::size_t n = spec.nodes.size();
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto p : spec.nodes[v].parents) {
      require(p < n, ErrorCode::kIndexOutOfRange,
              "node " + spec.nodes[v].name + " has parent index " + std::to_string(p) + " out of range");
      require(p != v, ErrorCode::kCyclicGraph, "node " + spec.nodes[v].name + " is its own parent");
    }
    indegree[v] = spec.nodes[v].parents.size();
  }
  const auto children = children_of(spec);
  // Lowest ready index first so the order is canonical.
  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    std::size_t next = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!done[v] && indegree[v] == 0) {
        next = v;
        break;
      }
    }
    require(next < n, ErrorCode::kCyclicGraph, "Bayes net has a cycle");
    done[next] = true;
    order.push_back(next);
    for (auto c : children[next]) --indegree[c];
  }
  return order;
}

std::vector<int> drift_classes(const BayesNetSpec& spec) {
  const std::size_t n = spec.nodes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t v = 0; v < n; ++v) {
    for (auto p : spec.nodes[v].parents) {
      require(p < n, ErrorCode::kIndexOutOfRange, "parent index out of range");
      parent[find(p)] = find(v);
    }
  }
  std::vector<bool> drifting_root(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    if (spec.nodes[v].direct) drifting_root[find(v)] = true;
  }
  std::vector<int> classes(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    classes[v] = spec.nodes[v].direct ? 2 : (drifting_root[find(v)] ? 1 : 0);
  }
  return classes;
}

std::vector<bool> shallow_nodes(const BayesNetSpec& spec) {
  const auto classes = drift_classes(spec);
  std::vector<bool> keep(spec.nodes.size(), false);
  for (std::size_t v = 0; v < spec.nodes.size(); ++v) {
    if (classes[v] == 0 || spec.nodes[v].direct) keep[v] = true;
    if (spec.nodes[v].direct) {
      for (auto p : spec.nodes[v].parents) keep[p] = true;
    }
  }
  return keep;
}

BayesNetSpec reference_net(std::uint64_t seed, BayesNetSpec::Mode mode) {
  Rng rng(seed);
  BayesNetSpec spec;
  spec.mode = mode;
  auto add = [&](const std::string& name, bool direct) {
    spec.nodes.push_back({name, {}, derive_seed(seed, 100 + spec.nodes.size()), direct});
    return spec.nodes.size() - 1;
  };
  const auto i1 = add("I1", true);
  const auto i2 = add("I2", true);
  const auto i3 = add("I3", false);
  const auto i4 = add("I4", false);
  spec.nodes[i1].parents.push_back(i3);
  spec.nodes[i2].parents.push_back(i4);
  if (rng.uniform() < 0.5) spec.nodes[i1].parents.push_back(i4);
  if (rng.uniform() < 0.5) spec.nodes[i2].parents.push_back(i3);

  // Each F node hangs off the drifting component as a new leaf, or as a new
  // root feeding a non-direct node, which keeps the graph acyclic and the
  // parents of direct nodes fixed.
  std::vector<std::size_t> component{i1, i2, i3, i4};
  for (int k = 1; k <= 7; ++k) {
    const auto f = add("F" + std::to_string(k), false);
    const auto anchor = component[rng.below(component.size())];
    if (spec.nodes[anchor].direct || rng.uniform() < 0.5) {
      spec.nodes[f].parents.push_back(anchor);
    } else {
      spec.nodes[anchor].parents.push_back(f);
    }
    component.push_back(f);
  }
  const auto n1 = add("N1", false);
  const auto n2 = add("N2", false);
  const auto n3 = add("N3", false);
  spec.nodes[n2].parents.push_back(n1);
  spec.nodes[n3].parents.push_back(rng.uniform() < 0.5 ? n1 : n2);
  return spec;
}

BayesNetSpec random_dag(std::size_t n_nodes, double edge_prob, std::size_t n_direct, std::uint64_t seed) {
  require(n_direct <= n_nodes, ErrorCode::kInvalidArgument, "more direct nodes than nodes");
  require(edge_prob >= 0.0 && edge_prob <= 1.0, ErrorCode::kInvalidArgument, "edge_prob must be in [0, 1]");
  Rng rng(seed);
  const auto order = rng.permutation(n_nodes);
  BayesNetSpec spec;
  for (std::size_t v = 0; v < n_nodes; ++v) {
    spec.nodes.push_back({"X" + std::to_string(v), {}, derive_seed(seed, 100 + v), false});
  }
  for (std::size_t a = 0; a < n_nodes; ++a) {
    for (std::size_t b = a + 1; b < n_nodes; ++b) {
      if (rng.uniform() < edge_prob) spec.nodes[order[b]].parents.push_back(order[a]);
    }
  }
  for (auto v : rng.sample_without_replacement(n_nodes, n_direct)) spec.nodes[v].direct = true;
  return spec;
}

LabeledStream gen_bayes_net(const BayesNetSpec& spec, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  require(!spec.nodes.empty(), ErrorCode::kInvalidArgument, "Bayes net has no nodes");
  const auto order = topological_order(spec);
  const auto classes = drift_classes(spec);
  const bool shallow = spec.mode == BayesNetSpec::Mode::kShallow;
  const auto keep = shallow ? shallow_nodes(spec) : std::vector<bool>(spec.nodes.size(), true);

  std::vector<std::vector<std::size_t>> inputs(spec.nodes.size());
  std::vector<NodeNet> nets;
  nets.reserve(spec.nodes.size());
  for (std::size_t v = 0; v < spec.nodes.size(); ++v) {
    for (auto p : spec.nodes[v].parents) {
      if (keep[p]) inputs[v].push_back(p);
    }
    nets.emplace_back(inputs[v].size() + (spec.nodes[v].direct ? 1 : 0), spec.nodes[v].param_seed);
  }

  std::vector<std::size_t> columns;
  for (std::size_t v = 0; v < spec.nodes.size(); ++v) {
    if (keep[v]) columns.push_back(v);
  }

  Rng rng(derive_seed(seed, 1));
  const auto grid = uniform_time_grid(n);
  std::vector<double> value(spec.nodes.size(), 0.0);
  std::vector<double> x;
  std::vector<std::vector<double>> rows(n, std::vector<double>(columns.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto v : order) {
      if (!keep[v]) continue;
      x.clear();
      for (auto p : inputs[v]) x.push_back(value[p]);
      if (spec.nodes[v].direct) x.push_back(grid[i]);
      const auto [mean, sigma] = nets[v](x);
      value[v] = mean + sigma * rng.normal();
    }
    for (std::size_t c = 0; c < columns.size(); ++c) rows[i][c] = value[columns[c]];
  }

  std::vector<std::string> names;
  LabeledStream out;
  std::vector<bool> parent_of_direct(spec.nodes.size(), false);
  for (const auto& node : spec.nodes) {
    if (node.direct) {
      for (auto p : node.parents) parent_of_direct[p] = true;
    }
  }
  for (auto v : columns) {
    names.push_back(spec.nodes[v].name);
    out.drifting_features.push_back(classes[v] > 0);
    out.shallow_features.push_back(spec.nodes[v].direct || parent_of_direct[v]);
  }
  out.dataset = grid_dataset(std::move(names), std::move(rows));
  nlohmann::json nodes = nlohmann::json::array();
  for (auto v : columns) {
    nlohmann::json parents = nlohmann::json::array();
    for (auto p : inputs[v]) parents.push_back(spec.nodes[p].name);
    nodes.push_back({{"name", spec.nodes[v].name},
                     {"parents", parents},
                     {"class", classes[v] == 2 ? "direct" : classes[v] == 1 ? "implicit" : "none"}});
  }
  out.provenance = {{"generator", "bayes_net"}, {"mode", shallow ? "shallow" : "complete"}, {"nodes", nodes},
                    {"seed", seed}};
  return out;
}

// ---- sensor faults ----

LabeledStream gen_sensor_fault(std::size_t n_sensors, std::size_t n, const std::vector<double>& fault_times,
                               const std::vector<int>& fault_sensors, std::uint64_t seed,
                               const SensorOptions& options) {
  require(n_sensors >= 1 && n >= 1, ErrorCode::kInvalidArgument, "need at least one sensor and one sample");
  require(fault_times.size() == fault_sensors.size(), ErrorCode::kInvalidArgument,
          "fault_times and fault_sensors differ in length");
  for (std::size_t f = 0; f < fault_times.size(); ++f) {
    require(fault_times[f] > 0.0 && fault_times[f] < 1.0, ErrorCode::kInvalidArgument, "fault times must be in (0, 1)");
    require(fault_sensors[f] >= 0 && static_cast<std::size_t>(fault_sensors[f]) < n_sensors,
            ErrorCode::kIndexOutOfRange, "fault sensor " + std::to_string(fault_sensors[f]) + " out of range");
  }
  Rng rng(seed);
  std::vector<double> gain(n_sensors), offset(n_sensors);
  for (std::size_t s = 0; s < n_sensors; ++s) {
    gain[s] = rng.uniform(0.8, 1.2);
    offset[s] = rng.normal();
  }
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows(n, std::vector<double>(n_sensors));
  for (std::size_t i = 0; i < n; ++i) {
    const double demand = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / options.demand_period) +
                          options.noise * rng.normal();
    for (std::size_t s = 0; s < n_sensors; ++s) {
      rows[i][s] = offset[s] + gain[s] * demand + options.noise * rng.normal();
    }
  }
  // Faults in time order; a later fault on the same sensor restarts the ramp.
  std::vector<std::size_t> by_time(fault_times.size());
  std::iota(by_time.begin(), by_time.end(), 0);
  std::stable_sort(by_time.begin(), by_time.end(), [&](auto a, auto b) { return fault_times[a] < fault_times[b]; });
  Rng fault_rng(derive_seed(seed, 1));
  for (auto f : by_time) {
    const auto s = static_cast<std::size_t>(fault_sensors[f]);
    std::size_t start = 0;
    while (start < n && grid[start] < fault_times[f]) ++start;
    if (start == n) continue;
    const double stuck = rows[start][s];
    for (std::size_t i = start; i < n; ++i) {
      rows[i][s] = stuck + options.ramp * (grid[i] - grid[start]) + options.noise * fault_rng.normal();
    }
  }
  std::vector<std::string> names;
  for (std::size_t s = 0; s < n_sensors; ++s) names.push_back("s" + std::to_string(s));
  LabeledStream out;
  out.dataset = grid_dataset(std::move(names), std::move(rows));
  out.drifting_features.assign(n_sensors, false);
  for (auto s : fault_sensors) out.drifting_features[static_cast<std::size_t>(s)] = true;
  if (!fault_times.empty()) out.change_point = *std::min_element(fault_times.begin(), fault_times.end());
  out.provenance = {{"generator", "sensor_fault"},
                    {"n_sensors", n_sensors},
                    {"fault_times", fault_times},
                    {"fault_sensors", fault_sensors},
                    {"seed", seed}};
  return out;
}

LabeledStream two_cluster_swap(std::size_t n, std::uint64_t seed, double change_point, double static_share) {
  require(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  require(change_point > 0.0 && change_point < 1.0, ErrorCode::kInvalidArgument, "change point must be in (0, 1)");
  Rng rng(seed);
  const auto grid = uniform_time_grid(n);
  std::vector<std::vector<double>> rows(n);
  LabeledStream out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < static_share) {
      rows[i] = {rng.normal(0, 0.5), rng.normal(0, 0.5)};
      out.true_regions.push_back(Region::kNotDrifting);
    } else if (grid[i] < change_point) {
      rows[i] = {rng.normal(4, 0.5), rng.normal(0, 0.5)};
      out.true_regions.push_back(Region::kBefore);
    } else {
      rows[i] = {rng.normal(0, 0.5), rng.normal(4, 0.5)};
      out.true_regions.push_back(Region::kAfter);
    }
  }
  out.dataset = grid_dataset({"x0", "x1"}, std::move(rows));
  out.drifting_features = {true, true};
  out.change_point = change_point;
  out.provenance = {{"generator", "two_cluster_swap"}, {"static_share", static_share}, {"seed", seed}};
  return out;
}

}  // namespace driftlens
