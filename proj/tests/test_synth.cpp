#include "steerlab/evalx.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/synth.hpp"

#include <doctest.h>

#include <cstring>

using namespace steerlab;
using namespace steerlab::synth;

namespace {

VocabConfig small_config() {
  VocabConfig c;
  c.frames = 24;
  c.channels = 16;
  c.prompt_dim = 16;
  c.ctx_tokens = 8;
  return c;
}

bool same_matrix(const Matf& a, const Matf& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.size())) == 0;
}

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("vocabulary is deterministic in seed and config") {
  const auto a = build_vocabulary(7);
  const auto b = build_vocabulary(7);
  CHECK(same_matrix(a.embedding_table, b.embedding_table));
  for (size_t i = 0; i < a.axes.size(); ++i) {
    CHECK(same_matrix(a.axes[i].variant_templates[0], b.axes[i].variant_templates[0]));
    CHECK(same_matrix(a.axes[i].variant_templates[1], b.axes[i].variant_templates[1]));
  }
  for (size_t i = 0; i < a.binaries.size(); ++i)
    CHECK(same_matrix(a.binaries[i].pattern, b.binaries[i].pattern));

  const auto c = build_vocabulary(8);
  bool any_diff = !same_matrix(a.binaries[0].pattern, c.binaries[0].pattern) ||
                  !same_matrix(a.embedding_table, c.embedding_table);
  CHECK(any_diff);
}

TEST_CASE("gram matrix: distinct templates are orthonormal after normalization") {
  const auto vocab = build_vocabulary(7);
  std::vector<const Matf*> templates;
  for (const auto& ax : vocab.axes) {
    templates.push_back(&ax.variant_templates[0]);
    templates.push_back(&ax.variant_templates[1]);
  }
  for (const auto& b : vocab.binaries) templates.push_back(&b.pattern);

  for (size_t i = 0; i < templates.size(); ++i)
    for (size_t j = 0; j < templates.size(); ++j) {
      if (i == j) continue;
      // Variants of one axis may be anti-correlated; any other pair must be
      // orthogonal. The mood pair (rising vs decaying ramp) has correlation -1.
      const double ip = std::abs((templates[i]->array() * templates[j]->array()).sum()) /
                        (double(templates[i]->norm()) * double(templates[j]->norm()));
      const bool same_axis_pair = (i / 2 == j / 2) && i < 6 && j < 6;
      if (!same_axis_pair) CHECK(ip < 1e-6);
    }
  // Templates are orthogonal to the style subspace.
  for (const auto* t : templates)
    for (const auto& basis : vocab.style_basis) {
      const double ip = std::abs((t->array() * basis.array()).sum()) / double(t->norm());
      CHECK(ip < 1e-6);
    }
}

TEST_CASE("axis variant correlation is non-positive after mean removal") {
  const auto vocab = build_vocabulary(7);
  for (const auto& ax : vocab.axes) {
    Matf a = ax.variant_templates[0], b = ax.variant_templates[1];
    a.array() -= a.mean();
    b.array() -= b.mean();
    const double corr = (a.array() * b.array()).sum() / (double(a.norm()) * double(b.norm()));
    CHECK(corr <= 1e-9);
  }
}

TEST_CASE("embedding table rows are unit-norm") {
  const auto vocab = build_vocabulary(7);
  for (int t = 0; t < vocab.embedding_table.rows(); ++t)
    CHECK(std::abs(vocab.embedding_table.row(t).norm() - 1.0f) < 1e-5f);
}

TEST_CASE("capacity errors for dimensions too small to fit orthogonal templates") {
  VocabConfig c = small_config();
  c.channels = 8;  // 8 groups need at least 16 channels
  CHECK_THROWS_AS(build_vocabulary(7, c), CapacityError);
  VocabConfig f = small_config();
  f.frames = 12;  // the fast sinusoid (8 cycles) needs F > 16
  CHECK_THROWS_AS(build_vocabulary(7, f), CapacityError);
  VocabConfig ok;
  CHECK_THROWS_AS(build_vocabulary(7, VocabConfig{2, 2, 64, 64, 32, 8}), ConfigError);
  CHECK_THROWS_AS(build_vocabulary(7, VocabConfig{3, 1, 64, 64, 32, 8}), ConfigError);
  (void)ok;
}

TEST_CASE("render: empty spec is the pure background") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec empty;
  empty.style_seed = 3;
  const Latent z = render_clean_latent(vocab, empty, 11);
  const Latent bg = render_background(vocab, 3, 11);
  CHECK(same_matrix(z, bg));
}

TEST_CASE("render: additive construction plants the template at amplitude 1") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec empty;
  empty.style_seed = 3;
  PromptSpec fast = empty;
  fast.assignments[0] = 1;  // tempo = fast
  const Latent delta =
      render_clean_latent(vocab, fast, 11) - render_clean_latent(vocab, empty, 11);
  const Matf& tmpl = vocab.axes[0].variant_templates[1];
  CHECK((delta - tmpl).norm() < 1e-5f * tmpl.norm());
}

TEST_CASE("render then probe round trip exceeds 0.9") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec spec;
  spec.style_seed = 9;
  spec.assignments[0] = 1;
  spec.assignments[1] = 0;
  spec.presences.insert(0);
  const Latent z = render_clean_latent(vocab, spec, 4);
  CHECK(evalx::probe_alignment(z, ConceptId::axis_variant(0, 1), vocab) > 0.9);
  CHECK(evalx::probe_alignment(z, ConceptId::binary_concept(0), vocab) > 0.9);
}

TEST_CASE("render rejects unknown axis or variant") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec bad;
  bad.assignments[99] = 0;
  CHECK_THROWS_AS(render_clean_latent(vocab, bad, 1), VocabularyMismatch);
  PromptSpec bad2;
  bad2.presences.insert(42);
  CHECK_THROWS_AS(render_clean_latent(vocab, bad2, 1), VocabularyMismatch);
}

TEST_CASE("embed: empty spec is background token plus padding") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec empty;
  const PromptEmbedding emb = embed_prompt(vocab, empty);
  CHECK(emb.rows() == vocab.config.ctx_tokens);
  CHECK(emb.row(0) == vocab.embedding_table.row(vocab.background_token));
  for (int r = 1; r < emb.rows(); ++r)
    CHECK(emb.row(r) == vocab.embedding_table.row(vocab.pad_token));
}

TEST_CASE("embed: deterministic and local in the changed concept") {
  const auto vocab = build_vocabulary(7, small_config());
  PromptSpec spec;
  spec.assignments[0] = 0;
  spec.assignments[2] = 1;
  spec.presences.insert(1);
  const PromptEmbedding a = embed_prompt(vocab, spec);
  const PromptEmbedding b = embed_prompt(vocab, spec);
  CHECK(same_matrix(a, b));

  PromptSpec other = spec;
  other.assignments[0] = 1;  // change only the tempo variant
  const PromptEmbedding c = embed_prompt(vocab, other);
  int diff_rows = 0, diff_row = -1;
  for (int r = 0; r < a.rows(); ++r)
    if (a.row(r) != c.row(r)) {
      ++diff_rows;
      diff_row = r;
    }
  CHECK(diff_rows == 1);
  CHECK(diff_row == 1);  // row 0 is the background token, row 1 the tempo slot
}

TEST_CASE("embed: capacity error when concepts exceed the token budget") {
  VocabConfig c = small_config();
  c.ctx_tokens = 3;
  const auto vocab = build_vocabulary(7, c);
  PromptSpec spec;
  spec.assignments[0] = 0;
  spec.assignments[1] = 0;
  spec.assignments[2] = 0;
  CHECK_THROWS_AS(embed_prompt(vocab, spec), CapacityError);
}

TEST_CASE("counterfactual pairs differ exactly in the named concept") {
  const auto vocab = build_vocabulary(7, small_config());
  const auto pairs =
      make_counterfactual_pairs(vocab, ConceptId::axis_variant(0, 1), 8, 123);
  for (const auto& [with_c, without_c] : pairs) {
    CHECK(with_c.assignments.at(0) == 1);
    CHECK(without_c.assignments.at(0) == 0);
    CHECK(with_c.presences == without_c.presences);
    CHECK(with_c.style_seed == without_c.style_seed);
    auto rest_a = with_c.assignments, rest_b = without_c.assignments;
    rest_a.erase(0);
    rest_b.erase(0);
    CHECK(rest_a == rest_b);
  }
}

TEST_CASE("binary pair: present vs identical-minus-presence") {
  const auto vocab = build_vocabulary(7, small_config());
  const auto pairs = make_counterfactual_pairs(vocab, ConceptId::binary_concept(0), 4, 5);
  for (const auto& [with_c, without_c] : pairs) {
    CHECK(with_c.presences.count(0) == 1);
    CHECK(without_c.presences.count(0) == 0);
    auto rest = with_c.presences;
    rest.erase(0);
    CHECK(rest == without_c.presences);
    CHECK(with_c.assignments == without_c.assignments);
  }
}

TEST_CASE("256 pairs are distinct") {
  const auto vocab = build_vocabulary(7);
  const auto pairs = make_counterfactual_pairs(vocab, ConceptId::axis_variant(1, 0), 256, 9);
  std::set<std::string> keys;
  for (const auto& [a, b] : pairs) keys.insert(a.key() + "//" + b.key());
  CHECK(keys.size() == 256);
}

TEST_CASE("pair symmetry: swapping roles yields the opposite variant's pairs") {
  const auto vocab = build_vocabulary(7, small_config());
  const auto fast = make_counterfactual_pairs(vocab, ConceptId::axis_variant(0, 1), 6, 77);
  const auto slow = make_counterfactual_pairs(vocab, ConceptId::axis_variant(0, 0), 6, 77);
  REQUIRE(fast.size() == slow.size());
  for (size_t i = 0; i < fast.size(); ++i) {
    CHECK(fast[i].first == slow[i].second);
    CHECK(fast[i].second == slow[i].first);
  }
}

TEST_CASE("template separability across all concepts and 16 seeds") {
  const auto vocab = build_vocabulary(7, small_config());
  for (const auto& cid : vocab.all_probe_concepts()) {
    const auto pairs = make_counterfactual_pairs(vocab, cid, 4, 31);
    for (uint64_t seed = 0; seed < 4; ++seed)
      for (const auto& [with_c, without_c] : pairs) {
        const double a =
            evalx::probe_alignment(render_clean_latent(vocab, with_c, seed), cid, vocab);
        const double b =
            evalx::probe_alignment(render_clean_latent(vocab, without_c, seed), cid, vocab);
        CHECK(a - b >= 0.3);
      }
  }
}

TEST_CASE("spec json round trip") {
  PromptSpec spec;
  spec.style_seed = 77;
  spec.assignments[1] = 1;
  spec.presences.insert(2);
  const PromptSpec back = spec_from_json(spec_to_json(spec));
  CHECK(back == spec);
}

TEST_SUITE_END();
