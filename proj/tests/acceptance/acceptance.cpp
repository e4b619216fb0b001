// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// if every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "../helpers.hpp"
#include "xact/xact.hpp"

using namespace xact;
using M = nn::Matrix<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates failed checks; the first few are reported.
struct Checks {
  int failed = 0;
  int total = 0;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok) {
      ++failed;
      if (notes.size() < 4) notes.push_back(what);
    }
  }
  Outcome outcome(const std::string& summary) const {
    std::string d = summary;
    for (const auto& n : notes) d += "; " + n;
    return {failed == 0, d};
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

M random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig tiny_model(Modality m, int d) {
  ModelConfig c;
  c.modality = m;
  c.composition = {1, d, 2, 2 * d};
  c.xrd = {1, d, 2, 2 * d};
  c.fusion = {1, d, 2, 2 * d};
  c.dropout = 0.0;
  return c;
}

// Shared 20k-record dataset for the learning criteria.
struct Dataset {
  SynthSpec spec;
  std::vector<MaterialRecord> train, test;
};

const Dataset& learning_data() {
  static const Dataset d = [] {
    Dataset out;
    auto recs = prepare_records(synth_dataset(20000, 1, out.spec), kDefaultSigma, 1);
    std::vector<std::uint64_t> ids;
    for (const auto& r : recs) ids.push_back(r.id);
    auto [tr, te] = apply_split(std::move(recs), split_dataset(ids, 0.9, 1));
    out.train = std::move(tr);
    out.test = std::move(te);
    return out;
  }();
  return d;
}

double final_metric(const Trainer& t) { return t.history().back().value; }

// ---------------------------------------------------------------------------

Outcome pipeline_exactness() {
  Checks c;
  const auto recs = synth_dataset(2000, 11, SynthSpec{});
  const auto dense = prepare_records(recs, kDefaultSigma, 1);
  for (const auto& r : dense) {
    const auto& v = r.dense().values;
    c.expect(v.size() == 4250, "record " + std::to_string(r.id) + " has " + std::to_string(v.size()) + " values");
    c.expect(std::abs(*std::max_element(v.begin(), v.end()) - 100.0f) <= 1e-4f, "max != 100 for " + std::to_string(r.id));
    c.expect(flatten(tokenize(r.dense())).values == v, "tokenize/flatten round trip");
    const auto t = tokenize(r.dense());
    c.expect(tokenize(flatten(t)).values == t.values, "flatten/tokenize round trip");
  }

  Rng rng(12);
  std::uniform_real_distribution<double> pos(5.0, 89.98);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const float centre = static_cast<float>(pos(rng));
    const auto v = smear(StickPattern{{{centre, 50.0f}}});
    auto g = [&](int i) {
      const double d = XrdGrid::angle(i) - centre;
      return std::exp(-d * d / (2.0 * kDefaultSigma * kDefaultSigma));
    };
    double peak = 0.0;
    for (int i = 0; i < XrdGrid::points; ++i) peak = std::max(peak, g(i));
    for (int i = 0; i < XrdGrid::points; ++i) {
      const double expected = 100.0 * g(i) / peak;
      // Relative to the point's value; in the far tails (below 1% of the peak), relative to the peak.
      const double err = std::abs(v.values[static_cast<std::size_t>(i)] - expected) / (expected >= 1.0 ? expected : 100.0);
      worst = std::max(worst, err);
    }
  }
  c.expect(worst <= 1e-6, "smear deviates from the Gaussian by " + fmt(worst));
  return c.outcome("2000 prepared records, 200 single-stick patterns; worst smear error " + fmt(worst, 3));
}

// ---------------------------------------------------------------------------

double contrastive_oracle(const M& c, const M& x, double tau) {
  const auto b = c.rows();
  M s(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      double dot = 0, nc = 0, nx = 0;
      for (Eigen::Index k = 0; k < c.cols(); ++k) {
        dot += c(i, k) * x(j, k);
        nc += c(i, k) * c(i, k);
        nx += x(j, k) * x(j, k);
      }
      s(i, j) = dot / std::sqrt(nc) / std::sqrt(nx) / tau;
    }
  double total = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double row = 0, col = 0;
    for (Eigen::Index j = 0; j < b; ++j) {
      row += std::exp(s(i, j));
      col += std::exp(s(j, i));
    }
    total += -std::log(std::exp(s(i, i)) / row) - std::log(std::exp(s(i, i)) / col);
  }
  return total / (2.0 * static_cast<double>(b));
}

Outcome loss_oracles() {
  Checks c;
  Rng rng(21);
  std::uniform_int_distribution<int> bsz(1, 8), dim(1, 16);
  std::uniform_real_distribution<double> tau(0.01, 1.0);
  double worst_c = 0.0, worst_m = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int b = bsz(rng), d = dim(rng);
    const M ce = random_matrix(rng, b, d), xe = random_matrix(rng, b, d);
    const double t = tau(rng);
    nn::Graph<double> g;
    const double got =
        g.scalar(contrastive_loss(g, g.constant(ce), g.constant(xe), g.constant(M::Constant(1, 1, std::log(t)))));
    worst_c = std::max(worst_c, rel(got, contrastive_oracle(ce, xe, t)));
  }

  const auto pool = xact::testing::dense_records(64, 22);
  for (int trial = 0; trial < 200; ++trial) {
    const int b = bsz(rng), d = 2 * std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<const MaterialRecord*> batch;
    for (int i = 0; i < b; ++i) batch.push_back(&pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    Rng init(static_cast<std::uint64_t>(trial));
    Model<double> model(tiny_model(Modality::bimodal, d), init);
    model.mxm_head().weight->value = random_matrix(rng, d, 250, 0.3);
    model.mxm_head().bias->value = random_matrix(rng, 1, 250, 0.1);
    std::vector<MaskSpec> masks;
    for (int i = 0; i < b; ++i) masks.push_back(MaskSpec::sample(rng, 0.2));

    nn::Graph<double> g;
    Encoded<double> enc;
    const double got = g.scalar(mxm_loss(g, model, batch, masks, true, &enc).loss);
    const M f = g.value(enc.fused->tokens);
    const M& w = model.mxm_head().weight->value;
    const M& bias = model.mxm_head().bias->value;
    double oracle = 0.0;
    for (int s = 0; s < b; ++s) {
      const auto& v = batch[static_cast<std::size_t>(s)]->dense().values;
      double sum = 0.0;
      int masked = 0;
      for (int i = 0; i < 17; ++i) {
        if (!masks[static_cast<std::size_t>(s)].bits()[static_cast<std::size_t>(i)]) continue;
        double mse = 0.0;
        for (int j = 0; j < 250; ++j) {
          double z = bias(0, j);
          for (int k = 0; k < d; ++k) z += f(s * 17 + i, k) * w(k, j);
          const double diff = std::max(z, 0.0) - v[static_cast<std::size_t>(i * 250 + j)] / 100.0;
          mse += diff * diff;
        }
        sum += mse / 250.0;
        ++masked;
      }
      oracle += sum / masked;
    }
    oracle /= b;
    worst_m = std::max(worst_m, rel(got, oracle));
  }
  c.expect(worst_c <= 1e-6, "contrastive relative error " + fmt(worst_c));
  c.expect(worst_m <= 1e-6, "MXM relative error " + fmt(worst_m));
  return c.outcome("200 + 200 instances; worst relative error contrastive " + fmt(worst_c, 2) + ", MXM " + fmt(worst_m, 2));
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Checks c;
  const auto recs = xact::testing::dense_records(4, 31);
  const auto batch = xact::testing::pointers(recs);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int d : {8, 16, 32}) {
    Rng init(static_cast<std::uint64_t>(d));
    Model<double> model(tiny_model(Modality::bimodal, d), init);
    model.standardizers()[Task::ef] = {0.5, 0.3};
    model.standardizers()[Task::band_gap] = {0.4, 0.2};
    Rng mr(static_cast<std::uint64_t>(d) + 1);
    std::vector<MaskSpec> masks;
    for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(MaskSpec::sample(mr, 0.3));
    const std::vector<Task> tasks{Task::ef, Task::crystal_system, Task::band_gap, Task::space_group};

    std::vector<std::pair<std::string, std::function<nn::Var(nn::Graph<double>&)>>> losses{
        {"supervised",
         [&](nn::Graph<double>& g) {
           return supervised_loss<double>(g, model, model.encode(g, batch).representation, batch, tasks);
         }},
        {"contrastive",
         [&](nn::Graph<double>& g) {
           auto e = model.encode(g, batch);
           return contrastive_loss(g, e.composition->cls, e.xrd->cls, g.param(model.log_tau()));
         }},
        {"mxm", [&](nn::Graph<double>& g) { return mxm_loss(g, model, batch, masks, true).loss; }},
        {"combined", [&](nn::Graph<double>& g) {
           Encoded<double> e;
           auto m = mxm_loss(g, model, batch, masks, true, &e);
           auto l = contrastive_loss(g, e.composition->cls, e.xrd->cls, g.param(model.log_tau()));
           return combined_pretrain_loss(g, l, m.loss, PretrainWeights{1.0, 1.0});
         }}};
    for (auto& [name, fn] : losses) {
      const auto r = nn::grad_check<double>(fn, model.params());
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
      c.expect(r.max_rel_error < 1e-5, name + " d=" + std::to_string(d) + " error " + fmt(r.max_rel_error) + " at " + r.worst_parameter);
    }
  }
  return c.outcome("4 losses x dims {8,16,32}, " + std::to_string(checked) + " coordinates; worst relative error " + fmt(worst, 2));
}

// ---------------------------------------------------------------------------

Outcome architecture_invariants() {
  Checks c;
  auto recs = xact::testing::dense_records(6, 41);
  Rng init(42);
  Model<float> model(tiny_model(Modality::bimodal, 16), init);
  auto forward = [&](const std::vector<MaterialRecord>& rs, std::vector<nn::Matrix<float>>* attn = nullptr) {
    nn::Graph<float> g;
    g.capture_attention = attn != nullptr;
    const auto e = model.encode(g, xact::testing::pointers(rs));
    if (attn)
      for (const auto& call : g.attention_probs)
        for (const auto& p : call) attn->push_back(p);
    return std::make_tuple(nn::Matrix<float>(g.value(e.composition->cls)), nn::Matrix<float>(g.value(e.fused->sequence)),
                           nn::Matrix<float>(g.value(e.representation)));
  };

  const auto [c0, f0, r0] = forward(recs);
  Rng perm(43);
  double worst_perm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto shuffled = recs;
    for (auto& r : shuffled) std::shuffle(r.composition.entries.begin(), r.composition.entries.end(), perm);
    const auto [c1, f1, r1] = forward(shuffled);
    worst_perm = std::max({worst_perm, static_cast<double>((c1 - c0).cwiseAbs().maxCoeff()),
                           static_cast<double>((f1 - f0).cwiseAbs().maxCoeff())});
  }
  c.expect(worst_perm <= 1e-5, "permutation changed outputs by " + fmt(worst_perm));

  auto swapped = recs;
  auto& v = std::get<XrdVector>(swapped[0].xrd).values;
  std::swap_ranges(v.begin() + 2 * 250, v.begin() + 3 * 250, v.begin() + 11 * 250);
  const auto [c2, f2, r2] = forward(swapped);
  const double xrd_shift = (r2.row(0) - r0.row(0)).cwiseAbs().maxCoeff();
  c.expect(xrd_shift > 1e-4, "swapping XRD tokens left f_cls unchanged");

  Rng inv(44);
  Model<double> dm(tiny_model(Modality::bimodal, 8), inv);
  std::vector<MaskSpec> masks;
  for (std::size_t i = 0; i < recs.size(); ++i) masks.push_back(MaskSpec::sample(inv, 0.2));
  nn::Graph<double> g;
  const auto out = mxm_loss(g, dm, xact::testing::pointers(recs), masks, true);
  g.backward(out.loss);
  const M grad = g.grad(out.reconstruction);
  const auto rows = batch_mask(masks);
  double unmasked = 0.0, masked = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double m = grad.row(static_cast<Eigen::Index>(r)).cwiseAbs().maxCoeff();
    (rows[r] ? masked : unmasked) = std::max(rows[r] ? masked : unmasked, m);
  }
  c.expect(unmasked == 0.0, "unmasked reconstruction gradient " + fmt(unmasked));
  c.expect(masked > 0.0, "masked rows received no gradient");

  std::vector<nn::Matrix<float>> attn;
  forward(recs, &attn);
  double worst_row = 0.0;
  for (const auto& p : attn)
    for (Eigen::Index i = 0; i < p.rows(); ++i) worst_row = std::max(worst_row, std::abs(static_cast<double>(p.row(i).sum()) - 1.0));
  c.expect(!attn.empty() && worst_row <= 1e-5, "attention row sum off by " + fmt(worst_row));

  return c.outcome("composition permutation drift " + fmt(worst_perm, 2) + ", XRD token swap shift " + fmt(xrd_shift, 3) +
                   ", unmasked gradient " + fmt(unmasked) + ", " + std::to_string(attn.size()) +
                   " attention maps with row-sum error " + fmt(worst_row, 2));
}

// ---------------------------------------------------------------------------

TrainConfig ef_config(std::uint64_t seed, int epochs, double lr) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.tasks = {Task::ef};
  tc.schedule.lr_peak = lr;
  tc.seed = seed;
  tc.checkpoint_fractions.clear();
  return tc;
}

Outcome multimodal_advantage() {
  Checks c;
  const auto& d = learning_data();
  // Floors from the generator's closed forms over the test split.
  const auto sticks = synth_dataset(20000, 1, d.spec);
  std::vector<double> comp_term, xrd_term;
  for (const auto& r : d.test) {
    const auto& src = sticks[r.id];
    comp_term.push_back(d.spec.alpha * composition_signal(src.composition, d.spec));
    xrd_term.push_back(d.spec.beta * xrd_signal(src.sticks()));
  }
  auto mad = [](const std::vector<double>& v) {
    const double m = median(v);
    double s = 0;
    for (double x : v) s += std::abs(x - m);
    return s / static_cast<double>(v.size());
  };
  const double noise_floor = d.spec.noise_std * std::sqrt(2.0 / std::numbers::pi);
  const double comp_floor = mad(xrd_term);  // composition-only model misses the XRD term
  const double xrd_floor = mad(comp_term);
  c.expect(comp_floor >= 2 * noise_floor && xrd_floor >= 2 * noise_floor, "unimodal floors below twice the noise floor");

  std::vector<double> ratios;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    double mae[3];
    int k = 0;
    for (Modality m : {Modality::bimodal, Modality::composition, Modality::xrd}) {
      Trainer t(tiny_model(m, 32), ef_config(seed, 20, 1e-3), TrainMode::supervised, d.train, d.test);
      t.run();
      mae[k++] = final_metric(t);
    }
    ratios.push_back(mae[0] / std::min(mae[1], mae[2]));
    per_seed += " [" + fmt(mae[0]) + " vs " + fmt(mae[1]) + "/" + fmt(mae[2]) + "]";
  }
  const double r = median(ratios);
  c.expect(r < 0.8, "median ratio " + fmt(r));
  return c.outcome("floors comp-only " + fmt(comp_floor) + ", XRD-only " + fmt(xrd_floor) + ", noise " + fmt(noise_floor) +
                   "; bimodal/best-unimodal MAE median " + fmt(r, 3) + " (bimodal vs comp/xrd:" + per_seed + ")");
}

// ---------------------------------------------------------------------------

struct SpeedupSettings {
  int finetune_epochs = 30;
  double lr = 1e-3;
  int pretrain_epochs = 20;
  double pretrain_lr = 1e-3;
  double mask_rate = kMaskRate;
};

Outcome pretraining_speedup(const SpeedupSettings& s) {
  Checks c;
  const auto& d = learning_data();
  const auto model = tiny_model(Modality::bimodal, 32);
  std::vector<double> ratios;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto tc = ef_config(seed, s.finetune_epochs, s.lr);
    Trainer scratch(model, tc, TrainMode::supervised, d.train, d.test);
    scratch.run();

    TrainConfig pc;
    pc.epochs = s.pretrain_epochs;
    pc.objective = PretrainObjective::mxm;
    pc.schedule.lr_peak = s.pretrain_lr;
    pc.mask_rate = s.mask_rate;
    pc.seed = seed;
    pc.checkpoint_fractions.clear();
    Trainer pre(model, pc, TrainMode::pretrain, d.train);
    pre.run();

    Trainer tuned(model, tc, TrainMode::supervised, d.train, d.test);
    tuned.initialize_from(pre.checkpoint());
    tuned.run();

    double threshold = 0.0;
    for (const auto& h : scratch.history())
      if (h.step == 10 * scratch.steps_per_epoch()) threshold = h.value;
    const Threshold t{"ef", "mae", threshold};
    const double base = *first_crossing(scratch.history(), t);
    const auto cand = first_crossing(tuned.history(), t);
    const double ratio = cand ? *cand / base : std::numeric_limits<double>::infinity();
    ratios.push_back(ratio);
    per_seed += " " + fmt(ratio, 3) + " (" + fmt(cand.value_or(-1), 4) + "/" + fmt(base, 4) + ")";
  }
  const double r = median(ratios);
  c.expect(r <= 0.7, "median step ratio " + fmt(r, 3));
  return c.outcome("pretrained/scratch steps to the scratch epoch-10 MAE, median " + fmt(r, 3) + ", per seed" + per_seed);
}

// ---------------------------------------------------------------------------

Outcome scaling_fit() {
  Checks c;
  double worst = 0.0;
  for (auto [a, b] : {std::pair{0.14, -0.046}, std::pair{0.07, -0.335}}) {
    std::vector<std::pair<double, double>> pts;
    for (double n : {1e4, 5e4, 1e5, 5e5, 1e6, 5e6}) pts.emplace_back(n, a * std::pow(n, b));
    const auto f = eval::fit_power_law(pts);
    worst = std::max({worst, std::abs(f.a - a), std::abs(f.b - b)});
    std::vector<std::pair<double, double>> scaled;
    for (auto [n, l] : pts) scaled.emplace_back(7.0 * n, 3.0 * l);
    const auto g = eval::fit_power_law(scaled);
    worst = std::max({worst, std::abs(g.b - f.b), std::abs(g.a - f.a * 3.0 * std::pow(7.0, -f.b))});
  }
  c.expect(worst <= 1e-9, "coefficient error " + fmt(worst));
  return c.outcome("recovered (0.14, -0.046) and (0.07, -0.335), scale covariance; worst deviation " + fmt(worst, 2));
}

// ---------------------------------------------------------------------------

double oracle_silhouette(const Eigen::MatrixXd& p, const std::vector<int>& lab) {
  const auto n = p.rows();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> by;
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        by[lab[static_cast<std::size_t>(j)]].first += (p.row(i) - p.row(j)).norm();
        by[lab[static_cast<std::size_t>(j)]].second += 1;
      }
    const int li = lab[static_cast<std::size_t>(i)];
    if (!by.count(li)) continue;
    const double a = by[li].first / by[li].second;
    double b = 1e300;
    for (const auto& [k, v] : by)
      if (k != li) b = std::min(b, v.first / v.second);
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

Outcome clustering() {
  Checks c;
  Rng rng(81);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int pts = 20 + 6 * trial, dim = 1 + trial % 5;
    Eigen::MatrixXd p(pts, dim);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = n(rng);
    std::vector<int> lab(static_cast<std::size_t>(pts));
    for (auto& l : lab) l = std::uniform_int_distribution<int>(0, 2 + trial % 5)(rng);
    if (std::set<int>(lab.begin(), lab.end()).size() < 2) continue;
    worst = std::max(worst, std::abs(eval::silhouette(p, lab).mean - oracle_silhouette(p, lab)));
  }
  c.expect(worst <= 1e-12, "silhouette differs from the oracle by " + fmt(worst));

  Eigen::MatrixXd blobs(150, 2);
  std::vector<int> bl(150);
  std::normal_distribution<double> tight(0.0, 0.2);
  for (int i = 0; i < 150; ++i) {
    bl[static_cast<std::size_t>(i)] = i % 3;
    blobs.row(i) << 10.0 * (i % 3) + tight(rng), 5.0 * (i % 3 == 1) + tight(rng);
  }
  const double blob_score = eval::silhouette(blobs, bl).mean;
  c.expect(blob_score > 0.95, "blob silhouette " + fmt(blob_score));

  const auto& d = learning_data();
  std::vector<int> labels;
  for (const auto& r : d.test) labels.push_back(static_cast<int>(*r.targets.crystal_system));
  double score[2];
  int k = 0;
  for (Modality m : {Modality::bimodal, Modality::composition}) {
    TrainConfig tc;
    tc.epochs = 30;
    tc.tasks = {Task::crystal_system};
    tc.schedule.lr_peak = 1e-3;
    tc.seed = 1;
    tc.checkpoint_fractions.clear();
    tc.eval_at_start = false;
    Trainer t(tiny_model(m, 32), tc, TrainMode::supervised, d.train, d.test);
    t.run();
    const auto f = eval::representations(t.model(), std::span<const MaterialRecord>(d.test));
    score[k++] = eval::silhouette(eval::pca_project(f, 2).coords, labels).mean;
  }
  c.expect(score[0] > score[1], "bimodal silhouette " + fmt(score[0]) + " not above composition-only " + fmt(score[1]));
  return c.outcome("oracle deviation " + fmt(worst, 2) + ", blobs " + fmt(blob_score) + "; crystal-system silhouette (2D PCA) bimodal " +
                   fmt(score[0], 3) + " vs composition-only " + fmt(score[1], 3));
}

// ---------------------------------------------------------------------------

bool same_parameters(const Model<float>& a, const Model<float>& b) {
  std::vector<nn::Matrix<float>> va;
  a.params().for_each([&](const nn::Parameter<float>& p) { va.push_back(p.value); });
  std::size_t i = 0;
  bool same = true;
  b.params().for_each([&](const nn::Parameter<float>& p) {
    same = same && i < va.size() && va[i].size() == p.value.size() &&
           std::memcmp(va[i].data(), p.value.data(), sizeof(float) * static_cast<std::size_t>(p.value.size())) == 0;
    ++i;
  });
  return same && i == va.size();
}

Outcome determinism() {
  Checks c;
  auto recs = xact::testing::dense_records(640, 91);
  std::vector<MaterialRecord> train(recs.begin(), recs.begin() + 512), test(recs.begin() + 512, recs.end());
  auto model = tiny_model(Modality::bimodal, 16);
  model.dropout = 0.1;
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 64;
  tc.tasks = {Task::ef, Task::crystal_system};
  tc.seed = 9;
  auto run = [&] {
    Trainer t(model, tc, TrainMode::supervised, train, test);
    t.run();
    return std::make_pair(history_csv(t.history()), encode_checkpoint(t.checkpoint()));
  };
  const auto a = run(), b = run();
  c.expect(a.first == b.first, "metric CSVs differ between identical runs");
  c.expect(a.second == b.second, "checkpoints differ between identical runs");

  for (TrainMode mode : {TrainMode::supervised, TrainMode::pretrain}) {
    auto cfg = tc;
    cfg.objective = PretrainObjective::both;
    Trainer full(model, cfg, mode, train, test);
    full.run();
    Trainer part(model, cfg, mode, train, test);
    for (long s = 0; s < full.total_steps() / 3; ++s) part.advance();
    Trainer resumed(model, cfg, mode, train, test);
    resumed.resume(decode_checkpoint(encode_checkpoint(part.checkpoint())));
    resumed.run();
    c.expect(same_parameters(full.model(), resumed.model()), mode_name(mode) + " resume changed parameters");
    c.expect(encode_checkpoint(full.checkpoint()) == encode_checkpoint(resumed.checkpoint()),
             mode_name(mode) + " resumed checkpoint differs");
  }

  Rng rng(92);
  std::vector<MaterialRecord> random;
  for (std::uint64_t i = 0; i < 10000; ++i) random.push_back(xact::testing::random_record(rng, i));
  const auto bytes = encode_shard(random);
  c.expect(decode_shard(bytes) == random, "shard round trip is not the identity");
  c.expect(encode_shard(decode_shard(bytes)) == bytes, "shard re-encoding differs");
  return c.outcome("two identical runs, supervised and pretraining resume from 1/3, 10^4-record shard (" +
                   std::to_string(bytes.size() / 1024) + " KiB)");
}

// ---------------------------------------------------------------------------

Outcome freeze_contract() {
  Checks c;
  auto recs = xact::testing::dense_records(1200, 101);
  std::vector<MaterialRecord> train(recs.begin(), recs.begin() + 1000), test(recs.begin() + 1000, recs.end());
  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 64;
  tc.tasks = {Task::ef};
  tc.schedule.lr_peak = 1e-3;
  tc.seed = 3;
  Trainer t(tiny_model(Modality::bimodal, 16), tc, TrainMode::supervised, train, test);
  t.run();
  auto model = load_model(t.checkpoint());
  const auto before = model_checkpoint(*model);
  ProbeConfig pc;
  pc.seed = 4;
  const auto r = linear_probe(*model, Task::band_gap, train, test, pc);
  const auto after = model_checkpoint(*model);
  std::size_t compared = 0;
  for (const auto& [name, m] : before.tensors) {
    const auto* n = after.find(name);
    const bool same = n && n->size() == m.size() &&
                      std::memcmp(n->data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0;
    c.expect(same, "backbone tensor " + name + " changed");
    ++compared;
  }
  c.expect(after.tensors.size() == before.tensors.size() + 2, "probe head was not added");
  c.expect(r.loss < r.baseline_loss, "probe loss " + fmt(r.loss) + " not below untrained head " + fmt(r.baseline_loss));
  return c.outcome(std::to_string(compared) + " backbone tensors bitwise unchanged; band-gap probe test loss " + fmt(r.baseline_loss) +
                   " -> " + fmt(r.loss) + ", MAE " + fmt(r.baseline_metric) + " -> " + fmt(r.metric_value));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  SpeedupSettings speed;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--mask-rate", speed.mask_rate, "MXM mask rate for the pretraining criterion")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"pipeline exactness", pipeline_exactness},
      {"loss oracles", loss_oracles},
      {"gradient correctness", gradient_correctness},
      {"architecture invariants", architecture_invariants},
      {"multimodal advantage", multimodal_advantage},
      {"pretraining speedup", [&] { return pretraining_speedup(speed); }},
      {"scaling fit", scaling_fit},
      {"clustering", clustering},
      {"determinism and persistence", determinism},
      {"freeze contract", freeze_contract},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
