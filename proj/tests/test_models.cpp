#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "animpref/toy_models.hpp"

using namespace animpref;
using namespace animpref::models;

namespace {

ModelConfig small_transformer() {
  ModelConfig c;
  c.n_blocks = 2;
  c.d = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.time_features = 6;
  c.steps = 2;
  c.grid_h = 2;
  c.grid_w = 2;
  c.audio_tokens = 2;
  c.audio_features = 4;
  c.skeleton_features = 3;
  return c;
}

Conditioning random_conditioning(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  Conditioning cond;
  if (c.use_audio) cond.audio = randn(c.steps * c.audio_tokens_per_step(), c.audio_features, rng);
  if (c.use_skeleton) cond.skeleton = randn(c.steps * c.skeleton_tokens_per_step(), c.joints, rng).cwiseAbs();
  return cond;
}

Mat rnd(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  return randn(r, c, rng);
}

Mat permute_rows(const Mat& m, const std::vector<int>& perm) {
  Mat out(m.rows(), m.cols());
  for (int i = 0; i < int(perm.size()); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

}  // namespace

TEST_CASE("transformer parameter count has a closed form") {
  for (bool audio : {false, true})
    for (bool skel : {false, true})
      for (bool pos : {false, true}) {
        ModelConfig c = small_transformer();
        c.use_audio = audio;
        c.use_skeleton = skel;
        c.positional = pos;
        const std::size_t d = 8, ff = 12, tf = 6, n = 8;
        std::size_t expect = (d * d + d) + (tf * d + d) + (d * d + d) + (pos ? n * d : 0);
        const bool motion = audio || skel;
        expect += 2 * (d + 4 * d * d + d + (d * ff + ff) + (ff * d + d) + (motion ? d + 3 * d * d : 0));
        if (audio) expect += 4 * d + d + std::size_t(c.audio_tokens_per_step()) * d;
        if (skel) expect += 3 * 3 + 3 * d + d + std::size_t(c.skeleton_tokens_per_step()) * d;
        CHECK(init_params(c, 1).count() == expect);
      }
}

TEST_CASE("MLP parameter count has a closed form") {
  ModelConfig c;
  c.architecture = Architecture::kMlp;
  c.d = 2;
  c.time_features = 8;
  c.hidden = 16;
  c.hidden_layers = 3;
  CHECK(init_params(c, 0).count() == (10 * 16 + 16) + 2 * (16 * 16 + 16) + (16 * 2 + 2));
}

TEST_CASE("initialization is deterministic and the output map starts at zero") {
  const ModelConfig c = small_transformer();
  const DenoiserParams a = init_params(c, 3), b = init_params(c, 3), other = init_params(c, 4);
  CHECK(a.tensors == b.tensors);
  CHECK(a.at("embed.w") != other.at("embed.w"));
  const Conditioning cond = random_conditioning(c, 2);
  CHECK(predict(c, a, rnd(8, 8, 5), 0.4, cond).cwiseAbs().maxCoeff() == 0.0);
  const DenoiserParams live = init_params(c, 3, false);
  const Mat y = predict(c, live, rnd(8, 8, 5), 0.4, cond);
  CHECK(y.rows() == 8);
  CHECK(y.cols() == 8);
  CHECK(y.cwiseAbs().maxCoeff() > 0.0);
  CHECK(y == predict(c, live, rnd(8, 8, 5), 0.4, cond));
  CHECK_THROWS_AS(live.at("nope"), Error);
}

TEST_CASE("without positions the transformer is permutation equivariant") {
  ModelConfig c = small_transformer();
  c.positional = false;
  c.use_audio = false;
  c.use_skeleton = false;
  const DenoiserParams p = init_params(c, 7, false);
  const Mat x = rnd(8, 8, 8);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Mat y = predict(c, p, x, 0.3, {});
  const Mat yp = predict(c, p, permute_rows(x, perm), 0.3, {});
  CHECK((yp - permute_rows(y, perm)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("with motion memory, tokens are equivariant within a step") {
  ModelConfig c = small_transformer();
  c.positional = false;
  const DenoiserParams p = init_params(c, 7, false);
  const Conditioning cond = random_conditioning(c, 3);
  const Mat x = rnd(8, 8, 9);
  const std::vector<int> perm{2, 0, 3, 1, 5, 4, 7, 6};
  const Mat y = predict(c, p, x, 0.7, cond);
  CHECK((predict(c, p, permute_rows(x, perm), 0.7, cond) - permute_rows(y, perm)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross attention is local to each step") {
  const Mat x = rnd(8, 8, 10);
  const Mat mem = rnd(2 * 3, 8, 11);
  Mat mem2 = mem;
  mem2.row(4) *= 3.0;
  const Mat wq = rnd(8, 8, 12), wk = rnd(8, 8, 13), wv = rnd(8, 8, 14);
  ad::Graph g;
  auto run = [&](const Mat& m) {
    return cross_attend(g.constant(x), g.constant(x), g.constant(m), g.constant(wq), g.constant(wk), g.constant(wv), 2, 3, 2)
        .value();
  };
  const Mat out1 = run(mem), out2 = run(mem2);
  CHECK(out1.topRows(4) == out2.topRows(4));
  CHECK(out1.bottomRows(4) != out2.bottomRows(4));
}

TEST_CASE("audio conditioning changes the prediction") {
  ModelConfig c = small_transformer();
  c.use_skeleton = false;
  const DenoiserParams p = init_params(c, 2, false);
  const Conditioning cond = random_conditioning(c, 4);
  Conditioning moved = cond;
  moved.audio.row(c.audio_tokens_per_step()) += Eigen::RowVectorXd::Constant(c.audio_features, 1.0);
  const Mat x = rnd(8, 8, 10);
  CHECK(predict(c, p, x, 0.5, cond) != predict(c, p, x, 0.5, moved));
  Conditioning bad = cond;
  bad.audio = Mat::Zero(3, c.audio_features);
  CHECK_THROWS_AS(predict(c, p, x, 0.5, bad), Error);
}

TEST_CASE("single-head cross attention equals the motion fusion operator") {
  const int d = 4;
  Rng rng(21);
  codec::LatentVideo z(3, 1, 2, d);
  z.tokens = randn(6, d, rng);
  const motion::MotionEmbedding h{3, 5, randn(15, d, rng)};
  const motion::FusionParams fp{randn(d, d, rng), randn(d, d, rng), randn(d, d, rng)};
  const codec::LatentVideo ref = motion::fuse(z, {h}, fp);
  ad::Graph g;
  const Mat out = cross_attend(g.constant(z.tokens), g.constant(z.tokens), g.constant(h.data), g.constant(fp.w_q),
                               g.constant(fp.w_k), g.constant(fp.w_v), 3, 5, 1)
                      .value();
  CHECK((out - ref.tokens).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cross_attend(g.constant(z.tokens), g.constant(z.tokens), g.constant(h.data), g.constant(fp.w_q),
                               g.constant(fp.w_k), g.constant(fp.w_v), 3, 4, 1),
                  Error);
}

TEST_CASE("frozen parameters receive zero gradient") {
  const ModelConfig c = small_transformer();
  const DenoiserParams p = init_params(c, 5, false);
  const Conditioning cond = random_conditioning(c, 6);
  const Mat x = rnd(8, 8, 7), target = rnd(8, 8, 8);
  const LossFn loss = [&](ad::Graph& g, const Bound& b) {
    return ad::mean_sq_diff(forward(c, b, g.constant(x), 0.6, cond), g.constant(target));
  };
  const TrainableFn only_skel = [](const std::string& n) { return n.rfind("motion.skeleton.", 0) == 0; };
  const Gradients gr = grad(p, loss, only_skel);
  REQUIRE(gr.tensors.size() == p.tensors.size());
  for (const auto& [name, m] : gr.tensors) {
    if (only_skel(name))
      CHECK(m.cwiseAbs().maxCoeff() > 0.0);
    else
      CHECK(m.cwiseAbs().maxCoeff() == 0.0);
  }
  const Gradients all = grad(p, loss);
  CHECK(all.loss == gr.loss);
  CHECK(all.tensors.at("motion.skeleton.w") == gr.tensors.at("motion.skeleton.w"));
}

TEST_CASE("non-finite loss names a parameter") {
  ModelConfig c = small_transformer();
  DenoiserParams p = init_params(c, 5, false);
  p.tensors["blocks.1.ff.w2"](0, 0) = std::numeric_limits<double>::infinity();
  const Conditioning cond = random_conditioning(c, 6);
  const Mat x = rnd(8, 8, 7);
  const LossFn loss = [&](ad::Graph& g, const Bound& b) { return ad::mean(forward(c, b, g.constant(x), 0.6, cond)); };
  try {
    grad(p, loss);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonFinite);
    CHECK(std::string(e.what()).find("blocks.1.ff.w2") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  ModelConfig c = small_transformer();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_transformer();
  c.time_features = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_transformer();
  c.conditioning = motion::Strategy::kPartialK2;
  c.rho = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(architecture_from_string(to_string(Architecture::kMlp)) == Architecture::kMlp);
}

TEST_CASE("time features") {
  const Mat f = time_features(0.0, 6);
  CHECK(f.leftCols(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f.rightCols(3).array() == 1.0).all());
  const Mat h = time_features(0.37, 8);
  for (int k = 0; k < 4; ++k) CHECK(h(0, k) * h(0, k) + h(0, 4 + k) * h(0, 4 + k) == doctest::Approx(1.0));
}
