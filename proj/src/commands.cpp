#include "steerlab/commands.hpp"

#include "steerlab/rng.hpp"
#include "steerlab/svg.hpp"
#include "steerlab/tensor_store.hpp"
#include "steerlab/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace steerlab::cmd {

namespace {

std::string provenance_line(const ExperimentConfig& cfg,
                            const std::vector<std::string>& upstream) {
  std::string line = "# config=" + cfg.hash();
  for (const auto& u : upstream) line += " upstream=" + u;
  return line;
}

dit::Weights load_weights(const ExperimentConfig& cfg, ArtifactStore& store) {
  const auto& entry = store.need("checkpoint", "train-model");
  return dit::load_checkpoint(store.path_of(entry));
}

patch::PatchMode parse_mode(const std::string& mode) {
  if (mode == "k-only") return patch::PatchMode::KOnly;
  if (mode == "v-only") return patch::PatchMode::VOnly;
  return patch::PatchMode::KV;
}

patch::ImpactMatrix load_impact(const ExperimentConfig& cfg, ArtifactStore& store,
                                std::vector<int>* functional) {
  const auto& entry = store.need("impact", "trace");
  json j = json::parse(read_text_file(store.path_of(entry)));
  patch::ImpactMatrix m;
  m.concepts = j.at("concepts").get<std::vector<std::string>>();
  m.pairs_per_concept = j.at("pairs_per_concept").get<int>();
  m.seeds_per_prompt = j.at("seeds_per_prompt").get<int>();
  m.delta = j.at("delta").get<double>();
  m.pair_seed = j.at("pair_seed").get<uint64_t>();
  for (const auto& row : j.at("layers")) {
    std::vector<patch::ImpactCell> cells;
    for (const auto& c : row) {
      patch::ImpactCell cell;
      cell.count = c.at("count").get<int>();
      cell.excluded = c.at("excluded").get<int>();
      cell.mean = c.at("value").is_null() ? 0.0 : c.at("value").get<double>();
      cells.push_back(cell);
    }
    m.cells.push_back(std::move(cells));
  }
  if (functional) *functional = j.at("functional_layers").get<std::vector<int>>();
  return m;
}

}  // namespace

int guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return kNumericFault;
  } catch (const TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << "\n";
    return kNumericFault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

patch::ImpactOptions impact_options(const ExperimentConfig& cfg) {
  patch::ImpactOptions opts;
  opts.pairs_per_concept = cfg.trace.pairs;
  opts.seeds_per_prompt = cfg.trace.seeds;
  opts.delta = cfg.trace.delta;
  opts.mode = parse_mode(cfg.trace.mode);
  opts.pair_seed = cfg.trace.pair_seed;
  opts.workers = cfg.workers;
  opts.diagnostic_full_set = cfg.trace.diagnostic;
  return opts;
}

int train_model_cmd(const ExperimentConfig& cfg, ArtifactStore& store) {
  cfg.validate();
  const auto vocab = synth::build_vocabulary(cfg.seed, cfg.vocab_config());
  dit::TrainOptions opts;
  opts.batch = cfg.train.batch;
  opts.lr = cfg.train.lr;
  opts.momentum = cfg.train.momentum;
  opts.workers = cfg.workers;
  auto sampler = dit::make_dataset_sampler(vocab, cfg.seed);
  dit::TrainResult result = dit::train(cfg.model, sampler, cfg.train.steps, cfg.seed, opts);

  json meta;
  meta["config_hash"] = cfg.hash();
  meta["seed"] = cfg.seed;
  meta["steps"] = cfg.train.steps;
  meta["initial_loss"] = result.initial_loss;
  meta["final_loss"] = result.final_loss;
  const fs::path ckpt_dir = store.root() / "checkpoints" / "model";
  dit::save_checkpoint(ckpt_dir, result.weights, meta);

  std::ostringstream csv;
  csv << provenance_line(cfg, {}) << "\n";
  csv << "step,loss\n";
  for (size_t i = 0; i < result.loss_curve.size(); ++i)
    csv << i << "," << fmt_float(result.loss_curve[i]) << "\n";
  write_text_file(store.root() / "reports" / "loss.csv", csv.str());

  store.record({"checkpoint", "checkpoint", "checkpoints/model", cfg.hash(),
                container_hash(ckpt_dir), {}});
  store.record({"loss-curve", "report", "reports/loss.csv", cfg.hash(),
                file_hash(store.root() / "reports" / "loss.csv"), {"checkpoint"}});
  std::cout << "checkpoint written (" << cfg.train.steps << " steps, final loss "
            << fmt_float(result.final_loss) << ")\n";
  return kOk;
}

int trace_cmd(const ExperimentConfig& cfg, ArtifactStore& store) {
  cfg.validate();
  const auto vocab = synth::build_vocabulary(cfg.seed, cfg.vocab_config());
  const dit::Weights w = load_weights(cfg, store);
  const auto concepts = vocab.default_concepts();
  auto probe_for = [&vocab](const synth::ConceptId& c) { return evalx::make_probe(vocab, c); };
  patch::ImpactMatrix matrix = patch::impact_matrix(w, vocab, concepts, probe_for,
                                                    impact_options(cfg));
  const auto functional =
      patch::select_functional_layers(matrix, {patch::SelectionPolicy::TopK,
                                               cfg.trace.functional_k, 0.5});

  const std::string prov = provenance_line(cfg, {store.need("checkpoint", "train-model").content_hash});
  write_text_file(store.root() / "reports" / "impact.csv", prov + "\n" + impact_to_csv(matrix));
  json j = impact_to_json(matrix);
  j["config_hash"] = cfg.hash();
  j["functional_layers"] = functional;
  write_text_file(store.root() / "reports" / "impact.json", j.dump(2) + "\n");
  write_text_file(store.root() / "figures" / "impact.svg",
                  svg::impact_heatmap(matrix, "impact by layer and concept", prov));

  store.record({"impact", "report", "reports/impact.json", cfg.hash(),
                file_hash(store.root() / "reports" / "impact.json"), {"checkpoint"}});
  std::cout << "impact matrix written; functional layers:";
  for (int l : functional) std::cout << " " << l;
  std::cout << "\n";
  return kOk;
}

steer::SteeringVector build_caa_vector(const ExperimentConfig& cfg, const dit::Weights& w,
                                       const synth::ConceptVocabulary& vocab,
                                       const synth::ConceptId& concept_id) {
  const auto pairs = synth::make_counterfactual_pairs(
      vocab, concept_id, cfg.steer.pairs,
      seed_mix({cfg.seed, 0xCAAull}));
  std::vector<synth::PromptSpec> pos, neg;
  for (const auto& [with_c, without_c] : pairs) {
    pos.push_back(with_c);
    neg.push_back(without_c);
  }
  std::vector<uint64_t> seeds;
  for (int s = 0; s < cfg.steer.pair_seeds; ++s)
    seeds.push_back(seed_mix({cfg.seed, 0xCAA5ull, static_cast<uint64_t>(s)}));
  std::vector<int> layers;
  for (int l = 0; l < cfg.model.layers; ++l) layers.push_back(l);
  auto pos_out = steer::collect_attn_outputs(w, vocab, pos, seeds, layers, cfg.workers);
  auto neg_out = steer::collect_attn_outputs(w, vocab, neg, seeds, layers, cfg.workers);
  steer::SteeringVector vec =
      steer::compute_caa_vector(pos_out, neg_out, vocab.concept_name(concept_id));
  if (cfg.steer.time_averaged) vec = steer::average_over_time(vec);
  return vec;
}

std::pair<sae::ActivationDataset, sae::ActivationDataset> harvest_contrastive(
    const ExperimentConfig& cfg, const dit::Weights& w, const synth::ConceptVocabulary& vocab,
    const synth::ConceptId& concept_id, int layer) {
  const auto pairs = synth::make_counterfactual_pairs(vocab, concept_id, cfg.steer.pairs,
                                                      seed_mix({cfg.seed, 0xCAAull}));
  std::vector<synth::PromptSpec> pos, neg;
  for (const auto& [with_c, without_c] : pairs) {
    pos.push_back(with_c);
    neg.push_back(without_c);
  }
  std::vector<uint64_t> seeds;
  for (int s = 0; s < cfg.steer.pair_seeds; ++s)
    seeds.push_back(seed_mix({cfg.seed, 0xCAA5ull, static_cast<uint64_t>(s)}));
  auto pos_ds = sae::harvest_activations(w, vocab, pos, seeds, layer, cfg.sae.stride,
                                         seed_mix({cfg.seed, 1}), cfg.workers);
  auto neg_ds = sae::harvest_activations(w, vocab, neg, seeds, layer, cfg.sae.stride,
                                         seed_mix({cfg.seed, 2}), cfg.workers);
  return {std::move(pos_ds), std::move(neg_ds)};
}

steer::SteeringVector build_sae_vector(const ExperimentConfig& cfg, const sae::SaeModel& model,
                                       const dit::Weights& w,
                                       const synth::ConceptVocabulary& vocab,
                                       const synth::ConceptId& concept_id,
                                       double median_row_norm) {
  auto [pos_ds, neg_ds] = harvest_contrastive(cfg, w, vocab, concept_id, model.layer);
  const auto table = sae::tfidf_scores(model, pos_ds.samples, neg_ds.samples, cfg.sae.epsilon);
  const std::string cname = vocab.concept_name(concept_id);
  const auto features = sae::select_features(table, cfg.tau_for(cname));
  steer::SteeringVector vec = sae::build_sae_steering_vector(
      model, features, cfg.model.layers, cfg.model.timesteps, cname);
  const double vnorm = vec.directions[static_cast<size_t>(model.layer)][0].norm();
  vec.alpha_scale = vnorm > 0 ? 2.0 * median_row_norm / vnorm : 1.0;
  return vec;
}

std::vector<double> alpha_grid_for(const ExperimentConfig& cfg,
                                   const steer::SteeringVector& vec) {
  if (cfg.steer.grid_preset == "paper-grid") {
    std::vector<double> grid;
    for (int a = -100; a <= 100; a += 10) grid.push_back(a);
    return grid;
  }
  return evalx::uniform_grid(vec.alpha_scale, cfg.steer.grid_points);
}

std::vector<evalx::PolicySpec> make_policies(const ExperimentConfig& cfg,
                                             const patch::ImpactMatrix& matrix, bool with_sae) {
  const auto functional = patch::select_functional_layers(
      matrix, {patch::SelectionPolicy::TopK, cfg.trace.functional_k, 0.5});
  std::set<int> func(functional.begin(), functional.end());
  std::set<int> all, complement;
  for (int l = 0; l < matrix.layer_count(); ++l) {
    all.insert(l);
    if (func.count(l) == 0) complement.insert(l);
  }
  std::vector<evalx::PolicySpec> policies;
  policies.push_back({"functional", func, false});
  policies.push_back({"complement", complement, false});
  policies.push_back({"all", all, false});
  if (with_sae) policies.push_back({"sae", {}, true});
  return policies;
}

int steer_cmd(const ExperimentConfig& cfg, ArtifactStore& store,
              const std::string& method, const std::string& concept_name,
              std::optional<double> alpha, bool sweep) {
  cfg.validate();
  if (method != "caa" && method != "sae") throw ConfigError("method must be caa or sae");
  const auto vocab = synth::build_vocabulary(cfg.seed, cfg.vocab_config());
  const dit::Weights w = load_weights(cfg, store);
  const auto concepts = vocab.default_concepts();

  std::optional<sae::SaeModel> sae_model;
  if (method == "sae") {
    const auto& entry = store.need("sae", "train-sae");
    sae_model = sae::load_sae(store.path_of(entry));
  }

  // Build and persist vectors for every default concept.
  std::vector<steer::SteeringVector> vectors;
  for (const auto& cid : concepts) {
    const std::string cname = vocab.concept_name(cid);
    steer::SteeringVector vec = build_caa_vector(cfg, w, vocab, cid);
    if (method == "sae") {
      const double row_norm = vec.alpha_scale / 2.0;  // collected median
      vec = build_sae_vector(cfg, *sae_model, w, vocab, cid, row_norm);
    }
    json meta;
    meta["config_hash"] = cfg.hash();
    meta["grid_preset"] = cfg.steer.grid_preset;
    const std::string id = "vector-" + method + "-" + cname;
    const fs::path dir = store.root() / "vectors" / (method + "-" + cname);
    steer::save_steering_vector(dir, vec, meta);
    store.record({id, "vector", "vectors/" + method + "-" + cname, cfg.hash(),
                  container_hash(dir), {"checkpoint"}});
    vectors.push_back(std::move(vec));
  }
  std::cout << "steering vectors written for " << vectors.size() << " concepts (" << method
            << ")\n";

  if (!sweep && !alpha) return kOk;

  // A requested generation or curve needs the functional layer set.
  std::vector<int> functional;
  (void)load_impact(cfg, store, &functional);
  const synth::ConceptId cid = vocab.parse_concept(concept_name);
  size_t ci = 0;
  for (; ci < concepts.size(); ++ci)
    if (vocab.concept_name(concepts[ci]) == vocab.concept_name(cid)) break;
  if (ci == concepts.size()) throw ConfigError("concept not in the default concept set");
  const steer::SteeringVector& vec = vectors[ci];
  std::set<int> layer_set(functional.begin(), functional.end());
  if (vec.method == steer::SteeringVector::Method::SAE) layer_set = {vec.source_layer};

  const auto specs = synth::neutral_specs(vocab, cid, 1, cfg.steer.prompt_seed);
  const uint64_t gen_seed = seed_mix({cfg.seed, 0x6E4ull});

  if (alpha) {
    Latent g = steer::apply_steering(w, vocab, specs[0], vec, *alpha, layer_set, gen_seed);
    const fs::path dir = store.root() / "reports" / "generations" /
                         ("steer-" + method + "-" + concept_name);
    json meta;
    meta["config_hash"] = cfg.hash();
    meta["alpha"] = *alpha;
    meta["concept"] = concept_name;
    write_container(dir, {NamedTensor::from_matrix("latent", g)}, meta);
    std::cout << "alpha=" << *alpha
              << " probe=" << fmt_float(evalx::probe_alignment(g, cid, vocab)) << "\n";
  }
  if (sweep) {
    const auto grid = alpha_grid_for(cfg, vec);
    std::ostringstream csv;
    csv << provenance_line(cfg, {}) << "\n";
    csv << "alpha,alignment\n";
    std::vector<Latent> gens;
    for (double a : grid) {
      Latent g = steer::apply_steering(w, vocab, specs[0], vec, a, layer_set, gen_seed);
      csv << fmt_float(a) << "," << fmt_float(evalx::probe_alignment(g, cid, vocab)) << "\n";
      gens.push_back(std::move(g));
    }
    const std::string rel = "reports/curves/steer-" + method + "-" + concept_name + ".csv";
    write_text_file(store.root() / rel, csv.str());
    std::vector<NamedTensor> tensors;
    for (size_t i = 0; i < gens.size(); ++i)
      tensors.push_back(NamedTensor::from_matrix("alpha" + std::to_string(i), gens[i]));
    json meta;
    meta["config_hash"] = cfg.hash();
    meta["concept"] = concept_name;
    write_container(store.root() / "reports" / "generations" /
                        ("sweep-" + method + "-" + concept_name),
                    tensors, meta);
    store.record({"curve-" + method + "-" + concept_name, "report", rel, cfg.hash(),
                  file_hash(store.root() / rel), {"checkpoint", "impact"}});
    std::cout << "sweep curve written to " << rel << "\n";
  }
  return kOk;
}

int train_sae_cmd(const ExperimentConfig& cfg, ArtifactStore& store, bool sweep) {
  cfg.validate();
  const auto vocab = synth::build_vocabulary(cfg.seed, cfg.vocab_config());
  const dit::Weights w = load_weights(cfg, store);
  std::vector<int> functional;
  patch::ImpactMatrix matrix = load_impact(cfg, store, &functional);

  // The SAE trains on the single highest-impact layer.
  const auto top1 = patch::select_functional_layers(matrix, {patch::SelectionPolicy::TopK, 1, 0.5});
  const int layer = top1.at(0);

  const auto corpus = synth::random_specs(vocab, cfg.sae.corpus_specs,
                                          seed_mix({cfg.seed, 0xC0B5ull}));
  std::vector<uint64_t> seeds;
  for (int s = 0; s < cfg.sae.corpus_seeds; ++s)
    seeds.push_back(seed_mix({cfg.seed, 0x5EED5ull, static_cast<uint64_t>(s)}));
  sae::ActivationDataset dataset = sae::harvest_activations(
      w, vocab, corpus, seeds, layer, cfg.sae.stride, seed_mix({cfg.seed, 3}), cfg.workers);
  dataset.corpus_id = "random-specs-" + std::to_string(cfg.sae.corpus_specs);

  sae::SaeTrainOptions opts;
  opts.lr = cfg.sae.lr;
  opts.batch = cfg.sae.batch;
  opts.workers = cfg.workers;

  json stats;
  stats["config_hash"] = cfg.hash();
  stats["layer"] = layer;
  stats["corpus"] = dataset.corpus_id;
  if (sweep) {
    const std::vector<int> m_grid = {2, 4, 8, 16};
    const std::vector<int> k_grid = {16, 32, 64};
    auto res = sae::sweep_sae(dataset, m_grid, k_grid, cfg.sae.epochs,
                              seed_mix({cfg.seed, 0x5AEull}), opts);
    std::ostringstream csv;
    csv << provenance_line(cfg, {}) << "\n";
    csv << "m,k,holdout_mse,explained_variance,dead_fraction,high_freq_fraction,feasible,selected\n";
    for (size_t i = 0; i < res.entries.size(); ++i) {
      const auto& e = res.entries[i];
      csv << e.m << "," << e.k << "," << fmt_float(e.holdout_mse) << ","
          << fmt_float(e.explained_variance) << "," << fmt_float(e.dead_fraction) << ","
          << fmt_float(e.high_freq_fraction) << "," << (e.feasible ? 1 : 0) << ","
          << (static_cast<int>(i) == res.best_index ? 1 : 0) << "\n";
    }
    write_text_file(store.root() / "reports" / "sae-sweep.csv", csv.str());
    stats["sweep_best_m"] = res.entries[static_cast<size_t>(res.best_index)].m;
    stats["sweep_best_k"] = res.entries[static_cast<size_t>(res.best_index)].k;
    std::cout << "sae sweep written; best m=" << res.entries[static_cast<size_t>(res.best_index)].m
              << " k=" << res.entries[static_cast<size_t>(res.best_index)].k << "\n";
  }

  auto result = sae::train_sae(dataset, cfg.sae.m, cfg.sae.k, cfg.sae.epochs,
                               seed_mix({cfg.seed, 0x5AEull}), opts);
  stats["explained_variance"] = result.report.explained_variance;
  stats["holdout_mse"] = result.report.holdout_mse;
  stats["dead_fraction"] = result.report.dead_fraction;
  stats["high_freq_fraction"] = result.report.high_freq_fraction;
  stats["resampled_features"] = result.report.resampled_features;
  stats["epoch_loss"] = result.report.epoch_loss;

  const fs::path dir = store.root() / "saes" / "sae";
  sae::save_sae(dir, result.model, stats);
  write_text_file(store.root() / "saes" / "sae-stats.json", stats.dump(2) + "\n");
  store.record({"sae", "sae", "saes/sae", cfg.hash(), container_hash(dir),
                {"checkpoint", "impact"}});
  std::cout << "sae trained on layer " << layer << " (ev "
            << fmt_float(result.report.explained_variance) << ", dead "
            << fmt_float(result.report.dead_fraction) << ")\n";
  return kOk;
}

std::string eval_report_csv(const evalx::EvalReport& report, const std::string& provenance) {
  std::ostringstream os;
  os << provenance << "\n";
  // Audio-quality columns are reserved but unavailable (no external scorer).
  os << "concept,policy,layers,n_layers,preservation_feat,preservation_dist,delta_alignment,"
        "smoothness,mean_spearman,baseline_alignment,curves,aq_ce,aq_cu,aq_pc,aq_pq\n";
  for (size_t ci = 0; ci < report.concepts.size(); ++ci)
    for (size_t pi = 0; pi < report.policies.size(); ++pi) {
      const auto& cell = report.cells[ci][pi];
      os << report.concepts[ci] << "," << report.policies[pi] << ",";
      if (!cell.available) {
        os << ",,,,,,,,,unavailable,unavailable,unavailable,unavailable\n";
        continue;
      }
      os << cell.layer_set << "," << cell.layer_count << "," << fmt_float(cell.preservation_feat)
         << "," << fmt_float(cell.preservation_dist) << "," << fmt_float(cell.delta_alignment)
         << "," << fmt_float(cell.smoothness) << "," << fmt_float(cell.mean_spearman) << ","
         << fmt_float(cell.baseline_alignment) << "," << cell.curves
         << ",unavailable,unavailable,unavailable,unavailable\n";
    }
  return os.str();
}

json eval_report_json(const evalx::EvalReport& report) {
  json j;
  j["concepts"] = report.concepts;
  j["policies"] = report.policies;
  j["eval_prompts"] = report.eval_prompts;
  j["eval_seeds"] = report.eval_seeds;
  j["concept_grids"] = report.concept_grids;
  j["audio_quality"] = "unavailable: external aesthetics scoring out of scope";
  json cells = json::array();
  for (size_t ci = 0; ci < report.concepts.size(); ++ci) {
    json row = json::array();
    for (size_t pi = 0; pi < report.policies.size(); ++pi) {
      const auto& cell = report.cells[ci][pi];
      json c;
      c["available"] = cell.available;
      if (cell.available) {
        c["layers"] = cell.layer_set;
        c["n_layers"] = cell.layer_count;
        c["preservation_feat"] = cell.preservation_feat;
        c["preservation_dist"] = cell.preservation_dist;
        c["delta_alignment"] = cell.delta_alignment;
        c["smoothness"] = cell.smoothness;
        c["mean_spearman"] = cell.mean_spearman;
        c["baseline_alignment"] = cell.baseline_alignment;
        c["curves"] = cell.curves;
        c["preservation_flagged"] = cell.preservation_flagged;
      }
      row.push_back(c);
    }
    cells.push_back(row);
  }
  j["cells"] = cells;
  return j;
}

int eval_cmd(const ExperimentConfig& cfg, ArtifactStore& store) {
  cfg.validate();
  const auto vocab = synth::build_vocabulary(cfg.seed, cfg.vocab_config());
  const dit::Weights w = load_weights(cfg, store);
  std::vector<int> functional;
  patch::ImpactMatrix matrix = load_impact(cfg, store, &functional);
  const auto concepts = vocab.default_concepts();

  std::vector<std::optional<steer::SteeringVector>> caa_vectors, sae_vectors;
  bool any_sae = false;
  for (const auto& cid : concepts) {
    const std::string cname = vocab.concept_name(cid);
    const auto caa_entry = store.find("vector-caa-" + cname);
    if (!caa_entry)
      throw MissingArtifact("missing steering vector for " + cname + ": run `steerlab steer` first");
    caa_vectors.push_back(steer::load_steering_vector(store.path_of(*caa_entry)));
    const auto sae_entry = store.find("vector-sae-" + cname);
    if (sae_entry) {
      sae_vectors.push_back(steer::load_steering_vector(store.path_of(*sae_entry)));
      any_sae = true;
    } else {
      sae_vectors.push_back(std::nullopt);
    }
  }

  evalx::SweepOptions opts;
  opts.eval_prompts = cfg.steer.eval_prompts;
  opts.eval_seeds = cfg.steer.eval_seeds;
  opts.prompt_seed = cfg.steer.prompt_seed;
  opts.workers = cfg.workers;
  for (size_t ci = 0; ci < concepts.size(); ++ci)
    opts.per_concept_grids.push_back(alpha_grid_for(cfg, *caa_vectors[ci]));

  // Persist every generation, one container per (concept, policy).
  struct GenBundle {
    std::vector<NamedTensor> tensors;
  };
  std::map<std::string, GenBundle> bundles;
  opts.generation_sink = [&bundles](const std::string& cname, const std::string& policy,
                                    int prompt, uint64_t seed, double alpha, const Latent& g) {
    char name[128];
    std::snprintf(name, sizeof(name), "p%03d_s%016llx_a%+08.3f", prompt,
                  static_cast<unsigned long long>(seed), alpha);
    bundles[cname + "-" + policy].tensors.push_back(NamedTensor::from_matrix(name, g));
  };
  std::map<std::string, std::string> curve_csvs;
  opts.curve_sink = [&curve_csvs](const std::string& cname, const std::string& policy,
                                  int prompt, uint64_t seed, const evalx::AlignmentCurve& curve) {
    auto& csv = curve_csvs[cname + "-" + policy];
    if (csv.empty()) csv = "prompt,seed,alpha,alignment\n";
    for (const auto& [a, v] : curve.points)
      csv += std::to_string(prompt) + "," + hex64(seed) + "," + fmt_float(a) + "," +
             fmt_float(v) + "\n";
  };

  const auto policies = make_policies(cfg, matrix, any_sae);
  evalx::EvalReport report = evalx::run_steering_sweep(w, vocab, concepts, caa_vectors,
                                                       sae_vectors, policies, opts);

  const std::string prov = provenance_line(cfg, {store.need("impact", "trace").content_hash});
  write_text_file(store.root() / "reports" / "eval.csv", eval_report_csv(report, prov));
  json j = eval_report_json(report);
  j["config_hash"] = cfg.hash();
  write_text_file(store.root() / "reports" / "eval.json", j.dump(2) + "\n");
  for (const auto& [key, csv] : curve_csvs)
    write_text_file(store.root() / "reports" / "curves" / (key + ".csv"), prov + "\n" + csv);
  for (const auto& [key, bundle] : bundles) {
    json meta;
    meta["config_hash"] = cfg.hash();
    write_container(store.root() / "reports" / "generations" / key, bundle.tensors, meta);
  }

  // Mean alignment curve per policy, one figure per concept.
  for (size_t ci = 0; ci < report.concepts.size(); ++ci) {
    std::vector<svg::Series> series;
    for (size_t pi = 0; pi < report.policies.size(); ++pi) {
      if (!report.cells[ci][pi].available) continue;
      const std::string key = report.concepts[ci] + "-" + report.policies[pi];
      // Reconstruct mean curve from the stored per-curve CSV.
      std::map<double, std::pair<double, int>> acc;
      std::istringstream in(curve_csvs[key]);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1),
                   c3 = line.find(',', c2 + 1);
        const double a = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
        const double v = std::stod(line.substr(c3 + 1));
        acc[a].first += v;
        acc[a].second += 1;
      }
      svg::Series s;
      s.label = report.policies[pi];
      for (const auto& [a, pv] : acc) s.points.emplace_back(a, pv.first / pv.second);
      series.push_back(std::move(s));
    }
    write_text_file(store.root() / "figures" / ("curves-" + report.concepts[ci] + ".svg"),
                    svg::line_chart(series, "alignment vs alpha: " + report.concepts[ci],
                                    "alpha", "alignment", prov));
  }

  store.record({"eval", "report", "reports/eval.json", cfg.hash(),
                file_hash(store.root() / "reports" / "eval.json"),
                {"checkpoint", "impact"}});
  std::cout << "eval report written (" << report.concepts.size() << " concepts, "
            << report.policies.size() << " policies)\n";
  return kOk;
}

int report_cmd(const ExperimentConfig& cfg, ArtifactStore& store) {
  std::ostringstream md;
  md << "# steerlab experiment report\n\n";
  md << "config hash: `" << cfg.hash() << "`\n\n";

  if (auto loss = store.find("loss-curve")) {
    md << "## Training\n\n";
    const std::string csv = read_text_file(store.path_of(*loss));
    int lines = 0;
    std::string last;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') {
        ++lines;
        last = line;
      }
    md << "- steps: " << (lines - 1) << "\n- final: `" << last << "`\n\n";
  }
  if (auto impact = store.find("impact")) {
    md << "## Layer localization\n\n";
    json j = json::parse(read_text_file(store.path_of(*impact)));
    md << "functional layers:";
    for (const auto& l : j.at("functional_layers")) md << " " << l.get<int>();
    md << "\n\n![impact heatmap](figures/impact.svg)\n\n";
    md << "| layer |";
    for (const auto& c : j.at("concepts")) md << " " << c.get<std::string>() << " |";
    md << "\n|---|";
    for (size_t i = 0; i < j.at("concepts").size(); ++i) md << "---|";
    md << "\n";
    int l = 0;
    for (const auto& row : j.at("layers")) {
      md << "| " << l++ << " |";
      for (const auto& c : row)
        md << " " << (c.at("value").is_null() ? std::string("-")
                                              : fmt_float(c.at("value").get<double>()))
           << " |";
      md << "\n";
    }
    md << "\n";
  }
  if (auto ev = store.find("eval")) {
    md << "## Steering\n\n";
    json j = json::parse(read_text_file(store.path_of(*ev)));
    md << "| concept | layers | (#) | Preservation feat | Preservation dist | Delta Alignment | "
          "Smoothness | CE | CU | PC | PQ |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    const auto& concepts = j.at("concepts");
    const auto& policies = j.at("policies");
    for (size_t ci = 0; ci < concepts.size(); ++ci) {
      for (size_t pi = 0; pi < policies.size(); ++pi) {
        const auto& cell = j.at("cells")[ci][pi];
        if (!cell.at("available").get<bool>()) continue;
        md << "| " << concepts[ci].get<std::string>() << " ("
           << policies[pi].get<std::string>() << ") | " << cell.at("layers").get<std::string>()
           << " | " << cell.at("n_layers").get<int>() << " | "
           << fmt_float(cell.at("preservation_feat").get<double>()) << " | "
           << fmt_float(cell.at("preservation_dist").get<double>()) << " | "
           << fmt_float(cell.at("delta_alignment").get<double>()) << " | "
           << fmt_float(cell.at("smoothness").get<double>())
           << " | n/a | n/a | n/a | n/a |\n";
      }
    }
    md << "\nAudio Quality columns (CE/CU/PC/PQ) are reserved; external aesthetics scoring is "
          "out of scope.\n\n";
    for (size_t ci = 0; ci < concepts.size(); ++ci)
      md << "![curves](figures/curves-" << concepts[ci].get<std::string>() << ".svg)\n";
    md << "\n";
  }
  if (!store.find("loss-curve") && !store.find("impact") && !store.find("eval"))
    md << "_store is empty; no artifacts to report._\n";

  const std::string markdown = md.str();
  write_text_file(store.root() / "reports" / "report.md", markdown);

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>steerlab report</title>"
       << "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;}"
       << "table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px}"
       << "</style></head><body>\n<pre>\n"
       << markdown << "\n</pre>\n</body></html>\n";
  write_text_file(store.root() / "reports" / "report.html", html.str());
  store.record({"report", "report", "reports/report.md", cfg.hash(),
                file_hash(store.root() / "reports" / "report.md"), {}});
  std::cout << "report written to reports/report.md\n";
  return kOk;
}

}  // namespace steerlab::cmd
