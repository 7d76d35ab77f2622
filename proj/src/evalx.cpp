#include "steerlab/evalx.hpp"

#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace steerlab::evalx {

double probe_alignment(const Latent& latent, const synth::ConceptId& concept_id,
                       const synth::ConceptVocabulary& vocab) {
  const Matf& tmpl = vocab.template_of(concept_id);
  if (latent.rows() != tmpl.rows() || latent.cols() != tmpl.cols())
    throw ContractViolation("latent shape does not match the vocabulary");
  // Background removal: project out the style subspace.
  Matd z = latent.cast<double>();
  for (const auto& basis : vocab.style_basis) {
    const Matd b = basis.cast<double>();
    z -= (z.array() * b.array()).sum() * b;
  }
  const Matd t = tmpl.cast<double>();
  const double amp = (z.array() * t.array()).sum() / t.squaredNorm();
  return clamp_unit(amp);
}

patch::ProbeFn make_probe(const synth::ConceptVocabulary& vocab,
                          const synth::ConceptId& concept_id) {
  (void)vocab.template_of(concept_id);  // unknown-concept check up front
  return [&vocab, concept_id](const Latent& z) {
    return probe_alignment(z, concept_id, vocab);
  };
}

void AlignmentCurve::check() const {
  require(points.size() >= 2, "alignment curve needs at least 2 points");
  for (size_t i = 0; i + 1 < points.size(); ++i)
    require(points[i].first < points[i + 1].first, "alphas must strictly increase");
}

double delta_alignment(const AlignmentCurve& curve) {
  curve.check();
  return curve.points.back().second - curve.points.front().second;
}

double smoothness(const AlignmentCurve& curve) {
  require(curve.points.size() >= 3, "smoothness needs at least 3 points");
  curve.check();
  std::vector<double> diffs;
  for (size_t i = 0; i + 1 < curve.points.size(); ++i)
    diffs.push_back(curve.points[i + 1].second - curve.points[i].second);
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / diffs.size();
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  return std::sqrt(var / diffs.size());
}

Vecd pooled_summary(const Latent& z) {
  const int d = static_cast<int>(z.cols());
  Vecd out(2 * d);
  const Matd zd = z.cast<double>();
  Vecd mean = zd.colwise().mean().transpose();
  out.head(d) = mean;
  for (int c = 0; c < d; ++c)
    out(d + c) = (zd.col(c).array() - mean(c)).square().mean();
  return out;
}

double frechet_gaussian(const Matd& rows_a, const Matd& rows_b, bool* ridged) {
  require(rows_a.cols() == rows_b.cols(), "population dimension mismatch");
  require(rows_a.rows() >= 2 && rows_b.rows() >= 2, "need at least 2 rows per population");
  const int d = static_cast<int>(rows_a.cols());
  auto fit = [d](const Matd& x, Vecd& mu, Matd& cov) {
    mu = x.colwise().mean().transpose();
    Matd centered = x.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  };
  Vecd mu1, mu2;
  Matd s1, s2;
  fit(rows_a, mu1, s1);
  fit(rows_b, mu2, s2);

  auto min_eig = [](const Matd& s) {
    Eigen::SelfAdjointEigenSolver<Matd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  };
  constexpr double kRidge = 1e-6;
  constexpr double kSingularTol = 1e-12;
  if (min_eig(s1) < kSingularTol || min_eig(s2) < kSingularTol) {
    s1 += kRidge * Matd::Identity(d, d);
    s2 += kRidge * Matd::Identity(d, d);
    if (ridged) *ridged = true;
  }

  // tr((s1 s2)^{1/2}) via the symmetric form sqrt(s1) s2 sqrt(s1).
  Eigen::SelfAdjointEigenSolver<Matd> es1(s1);
  Vecd eig1 = es1.eigenvalues().cwiseMax(0.0);
  Matd sqrt_s1 =
      es1.eigenvectors() * eig1.cwiseSqrt().asDiagonal() * es1.eigenvectors().transpose();
  Matd inner = sqrt_s1 * s2 * sqrt_s1;
  Eigen::SelfAdjointEigenSolver<Matd> es2(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double fd2 = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  // The eigensolver leaves noise around 1e-13 on identical inputs; snap the
  // mathematically-zero case (and tiny negatives) to zero.
  if (std::abs(fd2) < 1e-10) fd2 = 0.0;
  return std::max(0.0, fd2);
}

PreservationResult preservation(const std::vector<Latent>& steered, const Latent& baseline) {
  require(!steered.empty(), "preservation needs at least one steered generation");
  PreservationResult out;
  const Vecd base_summary = pooled_summary(baseline);
  const Matd base_rows = baseline.cast<double>();
  double feat_sum = 0.0, dist_sum = 0.0;
  for (const auto& z : steered) {
    feat_sum += (pooled_summary(z) - base_summary).norm();
    bool ridged = false;
    dist_sum += frechet_gaussian(z.cast<double>(), base_rows, &ridged);
    out.covariance_ridged = out.covariance_ridged || ridged;
  }
  out.feat_dist = feat_sum / static_cast<double>(steered.size());
  out.dist_dist = dist_sum / static_cast<double>(steered.size());
  return out;
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&xs](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, "spearman needs paired data");
  const auto rx = ranks_with_ties(xs);
  const auto ry = ranks_with_ties(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx <= 0 || dy <= 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

std::vector<double> uniform_grid(double a, int points) {
  require(points >= 2, "grid needs at least 2 points");
  std::vector<double> grid(static_cast<size_t>(points));
  for (int i = 0; i < points; ++i)
    grid[static_cast<size_t>(i)] = -a + 2.0 * a * i / (points - 1);
  // Snap the midpoint of odd grids to exactly zero for the baseline.
  if (points % 2 == 1) grid[static_cast<size_t>(points / 2)] = 0.0;
  return grid;
}

EvalReport run_steering_sweep(
    const dit::Weights& w, const synth::ConceptVocabulary& vocab,
    const std::vector<synth::ConceptId>& concepts,
    const std::vector<std::optional<steer::SteeringVector>>& caa_vectors,
    const std::vector<std::optional<steer::SteeringVector>>& sae_vectors,
    const std::vector<PolicySpec>& policies, const SweepOptions& opts) {
  require(!opts.alpha_grid.empty() || !opts.per_concept_grids.empty(),
          "alpha grid must be non-empty");

  EvalReport report;
  report.eval_prompts = opts.eval_prompts;
  report.eval_seeds = opts.eval_seeds;
  for (const auto& p : policies) report.policies.push_back(p.name);
  report.cells.assign(concepts.size(), std::vector<SweepCell>(policies.size()));

  for (size_t ci = 0; ci < concepts.size(); ++ci) {
    const auto& concept_id = concepts[ci];
    const std::string cname = vocab.concept_name(concept_id);
    report.concepts.push_back(cname);

    const std::vector<double>& grid =
        opts.per_concept_grids.empty() ? opts.alpha_grid : opts.per_concept_grids[ci];
    report.concept_grids.push_back(grid);
    const auto zero_it = std::find(grid.begin(), grid.end(), 0.0);
    require(zero_it != grid.end(), "alpha grid must contain 0 for the unsteered baseline");
    const size_t zero_pos = static_cast<size_t>(zero_it - grid.begin());

    const auto specs = synth::neutral_specs(vocab, concept_id, opts.eval_prompts,
                                            seed_mix({opts.prompt_seed, static_cast<uint64_t>(ci)}));
    std::vector<uint64_t> seeds;
    for (int s = 0; s < opts.eval_seeds; ++s)
      seeds.push_back(seed_mix({opts.prompt_seed, 0xE7A1ull, static_cast<uint64_t>(s)}));

    for (size_t pi = 0; pi < policies.size(); ++pi) {
      const auto& policy = policies[pi];
      SweepCell& cell = report.cells[ci][pi];
      const std::optional<steer::SteeringVector>& vec =
          policy.use_sae ? sae_vectors[ci] : caa_vectors[ci];
      if (!vec) {
        cell.available = false;  // skipped with diagnostic
        continue;
      }
      std::set<int> layer_set = policy.layer_set;
      if (policy.use_sae) layer_set = {vec->source_layer};
      {
        std::string ls;
        for (int l : layer_set) ls += (ls.empty() ? "" : "+") + std::to_string(l);
        cell.layer_set = ls;
        cell.layer_count = static_cast<int>(layer_set.size());
      }

      const int n_curves = static_cast<int>(specs.size() * seeds.size());
      const int n_alphas = static_cast<int>(grid.size());
      struct CurveResult {
        std::vector<Latent> gens;
        AlignmentCurve curve;
      };
      std::vector<CurveResult> curves(static_cast<size_t>(n_curves));
      parallel_for(n_curves, opts.workers, [&](int item) {
        const size_t si = static_cast<size_t>(item) / seeds.size();
        const size_t ki = static_cast<size_t>(item) % seeds.size();
        CurveResult& res = curves[static_cast<size_t>(item)];
        res.gens.reserve(static_cast<size_t>(n_alphas));
        res.curve.concept_name = cname;
        res.curve.method = policy.use_sae ? "sae" : "caa";
        res.curve.layer_set = cell.layer_set;
        for (double alpha : grid) {
          Latent g = steer::apply_steering(w, vocab, specs[si], *vec, alpha, layer_set,
                                           seeds[ki]);
          res.curve.points.emplace_back(alpha, probe_alignment(g, concept_id, vocab));
          res.gens.push_back(std::move(g));
        }
      });

      double feat_sum = 0, dist_sum = 0, delta_sum = 0, smooth_sum = 0, rho_sum = 0,
             base_sum = 0;
      bool flagged = false;
      for (int item = 0; item < n_curves; ++item) {
        const size_t si = static_cast<size_t>(item) / seeds.size();
        const size_t ki = static_cast<size_t>(item) % seeds.size();
        CurveResult& res = curves[static_cast<size_t>(item)];
        if (opts.generation_sink)
          for (int ai = 0; ai < n_alphas; ++ai)
            opts.generation_sink(cname, policy.name, static_cast<int>(si), seeds[ki],
                                 grid[static_cast<size_t>(ai)],
                                 res.gens[static_cast<size_t>(ai)]);
        if (opts.curve_sink)
          opts.curve_sink(cname, policy.name, static_cast<int>(si), seeds[ki], res.curve);

        const Latent& baseline = res.gens[zero_pos];
        PreservationResult pres = preservation(res.gens, baseline);
        feat_sum += pres.feat_dist;
        dist_sum += pres.dist_dist;
        flagged = flagged || pres.covariance_ridged;
        delta_sum += delta_alignment(res.curve);
        if (res.curve.points.size() >= 3) smooth_sum += smoothness(res.curve);
        std::vector<double> alphas, aligns;
        for (const auto& [a, v] : res.curve.points) {
          alphas.push_back(a);
          aligns.push_back(v);
        }
        rho_sum += spearman(alphas, aligns);
        base_sum += res.curve.points[zero_pos].second;
      }
      cell.preservation_feat = feat_sum / n_curves;
      cell.preservation_dist = dist_sum / n_curves;
      cell.delta_alignment = delta_sum / n_curves;
      cell.smoothness = smooth_sum / n_curves;
      cell.mean_spearman = rho_sum / n_curves;
      cell.baseline_alignment = base_sum / n_curves;
      cell.curves = n_curves;
      cell.preservation_flagged = flagged;
      cell.available = true;
    }
  }
  return report;
}

}  // namespace steerlab::evalx
