#include <doctest.h>

#include <cmath>

#include "eat/model.hpp"
#include "helpers.hpp"

using namespace eat;
using testutil::random_vec;
using testutil::rel_err;

namespace {

EatConfig micro_cfg(std::uint64_t seed = 1) {
  EatConfig cfg;
  cfg.n_classes = 3;
  cfg.n_attributes = 2;
  cfg.d_e = 4;
  cfg.image_size = 16;
  cfg.trunk_channels = {4, 4};
  cfg.head_channels = 4;
  cfg.gi_channels = 2;
  cfg.lr = 0.05f;
  cfg.momentum = 0.9f;
  cfg.epochs = 1;
  cfg.seed = seed;
  return cfg;
}

Tensor random_image(Rng& rng, int size) {
  return Tensor::from({3, size, size}, random_vec(rng, static_cast<std::size_t>(3) * size * size, 0.0f, 1.0f));
}

// In-memory dataset with random images; attribute rows are bit patterns.
Dataset micro_dataset(const EatConfig& cfg, int per_class, std::uint64_t seed, int test_per_class = 0) {
  Dataset ds;
  ds.attributes.n_classes = cfg.n_classes;
  ds.attributes.n_attributes = cfg.n_attributes;
  for (int c = 0; c < cfg.n_classes; ++c) {
    ds.attributes.class_names.push_back("class_" + std::to_string(c));
    for (int a = 0; a < cfg.n_attributes; ++a)
      ds.attributes.values.push_back(static_cast<std::uint8_t>((c >> a) & 1));
  }
  for (int a = 0; a < cfg.n_attributes; ++a) ds.attributes.attribute_names.push_back("attr_" + std::to_string(a));

  Rng rng(seed);
  for (int phase = 0; phase < 2; ++phase) {
    const int count = phase == 0 ? per_class : test_per_class;
    for (int c = 0; c < cfg.n_classes; ++c) {
      for (int i = 0; i < count; ++i) {
        Sample s;
        s.image_id = (phase == 0 ? "train_" : "test_") + std::to_string(c) + "_" + std::to_string(i);
        s.image = random_image(rng, cfg.image_size);
        s.label = c;
        s.attributes = ds.attributes.row(c);
        s.split = phase == 0 ? Split::Train : Split::Test;
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("forward: lambda=1 eta=0 fuses to the category head") {
  EatConfig cfg = micro_cfg(3);
  cfg.lambda = 1.0f;
  cfg.eta = 0.0f;
  EatModel model = EatModel::init(cfg);
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    Tensor img = random_image(rng, cfg.image_size);
    ForwardOutputs out = eat_forward(nullptr, ParamView(model.params), img, cfg);
    CHECK(argmax(out.c) == argmax(out.c_p));
  }
}

TEST_CASE("forward: embedding grid has one row per attribute plus the category row") {
  EatConfig cfg = micro_cfg(4);
  EatModel model = EatModel::init(cfg);
  Rng rng(18);
  ForwardOutputs out = eat_forward(nullptr, ParamView(model.params), random_image(rng, cfg.image_size), cfg);
  CHECK(out.e.shape == Shape{cfg.n_attributes + 1, cfg.d_e});
  CHECK(out.e_a.shape == Shape{cfg.n_attributes, cfg.d_e});
  CHECK(out.e_p.shape == Shape{1, cfg.d_e});
  CHECK(out.a.shape == Shape{cfg.n_attributes});
  for (float v : out.a.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("forward: zero attribute weight vectors make embedding rows image-independent") {
  EatConfig cfg = micro_cfg(5);
  EatModel model = EatModel::init(cfg);
  for (int i = 1; i <= cfg.n_attributes; ++i) {
    for (float& v : model.params.at("emb_a.u" + std::to_string(i)).data) v = 0.0f;
  }
  Rng rng(19);
  ForwardOutputs o1 = eat_forward(nullptr, ParamView(model.params), random_image(rng, cfg.image_size), cfg);
  ForwardOutputs o2 = eat_forward(nullptr, ParamView(model.params), random_image(rng, cfg.image_size), cfg);
  CHECK(o1.e_a.data == o2.e_a.data);
  for (int i = 0; i < cfg.n_attributes; ++i) {
    const Tensor& b = model.params.at("emb_a.b" + std::to_string(i + 1));
    for (int j = 0; j < cfg.d_e; ++j)
      CHECK(o1.e_a.data[static_cast<std::size_t>(i * cfg.d_e + j)] == b.data[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("forward rejects wrong shapes and non-finite pixels") {
  EatConfig cfg = micro_cfg(6);
  EatModel model = EatModel::init(cfg);
  CHECK_THROWS_AS(eat_forward(nullptr, ParamView(model.params), Tensor::zeros({3, 8, 8}), cfg), Error);
  Tensor bad = Tensor::zeros({3, cfg.image_size, cfg.image_size});
  bad.data[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(eat_forward(nullptr, ParamView(model.params), bad, cfg), Error);
}

TEST_CASE("loss: saturated correct logits give exactly zero loss") {
  EatConfig cfg = micro_cfg(7);
  EatModel model = EatModel::init(cfg);
  ForwardOutputs out;
  out.c = Tensor::from({3}, {80.0f, -80.0f, -80.0f});
  out.c_i = out.c;
  for (int i = 0; i < cfg.n_attributes; ++i) {
    out.attr_logits.push_back(Tensor::from({2}, {-80.0f, 80.0f}));
    out.attr_probs.push_back(softmax(nullptr, out.attr_logits.back()));
  }
  const std::vector<std::uint8_t> attr_gt(static_cast<std::size_t>(cfg.n_attributes), 1);
  LossParts parts = eat_loss(nullptr, out, 0, attr_gt, cfg);
  CHECK(parts.total.item() == 0.0f);
  CHECK(parts.category.item() == 0.0f);
  CHECK(parts.attribute.item() == 0.0f);
}

TEST_CASE("loss: single uniform attribute contributes ln(2)/2") {
  EatConfig cfg = micro_cfg(8);
  cfg.n_attributes = 1;
  ForwardOutputs out;
  out.c = Tensor::from({3}, {50.0f, -50.0f, -50.0f});
  out.c_i = out.c;
  out.attr_logits.push_back(Tensor::from({2}, {0.0f, 0.0f}));
  out.attr_probs.push_back(softmax(nullptr, out.attr_logits.back()));
  LossParts parts = eat_loss(nullptr, out, 0, {1}, cfg);
  CHECK(std::abs(parts.attribute.item() - 0.5 * std::log(2.0)) < 1e-6);
  CHECK(parts.category.item() == 0.0f);
}

TEST_CASE("loss: label out of range is an error") {
  EatConfig cfg = micro_cfg(9);
  EatModel model = EatModel::init(cfg);
  Rng rng(9);
  ForwardOutputs out = eat_forward(nullptr, ParamView(model.params), random_image(rng, cfg.image_size), cfg);
  CHECK_THROWS_AS(eat_loss(nullptr, out, cfg.n_classes, {0, 1}, cfg), Error);
  CHECK_THROWS_AS(eat_loss(nullptr, out, -1, {0, 1}, cfg), Error);
}

TEST_CASE("property: loss decomposition and fusion linearity hold on random models") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    EatConfig cfg = micro_cfg(1000 + static_cast<std::uint64_t>(trial));
    cfg.lambda = rng.uniform(0.5f, 1.5f);
    cfg.eta = rng.uniform(0.5f, 1.5f);
    EatModel model = EatModel::init(cfg);
    Tensor img = random_image(rng, cfg.image_size);
    ForwardOutputs out = eat_forward(nullptr, ParamView(model.params), img, cfg);

    // c = lambda*c_p + eta*c_i recomputed externally
    for (int i = 0; i < cfg.n_classes; ++i) {
      const double expect = static_cast<double>(cfg.lambda) * out.c_p.data[static_cast<std::size_t>(i)] +
                            static_cast<double>(cfg.eta) * out.c_i.data[static_cast<std::size_t>(i)];
      CHECK(std::abs(expect - out.c.data[static_cast<std::size_t>(i)]) < 1e-6);
    }

    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_classes)));
    std::vector<std::uint8_t> attr_gt;
    for (int a = 0; a < cfg.n_attributes; ++a) attr_gt.push_back(static_cast<std::uint8_t>(rng.below(2)));
    LossParts parts = eat_loss(nullptr, out, label, attr_gt, cfg);
    const double recomposed = static_cast<double>(cfg.lambda) * parts.category.item() +
                              static_cast<double>(cfg.eta) * parts.attribute.item();
    CHECK(std::abs(recomposed - parts.total.item()) < 1e-6);
  }
}

TEST_CASE("hard parameter sharing: attribute loss alone reaches trunk parameters") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    EatConfig cfg = micro_cfg(3000 + static_cast<std::uint64_t>(trial));
    EatModel model = EatModel::init(cfg);
    Tensor img = random_image(rng, cfg.image_size);

    Tape tape;
    BoundParams bound(tape, model.params);
    ForwardOutputs out = eat_forward(&tape, ParamView(bound), img, cfg);
    std::vector<std::uint8_t> attr_gt;
    for (int a = 0; a < cfg.n_attributes; ++a) attr_gt.push_back(static_cast<std::uint8_t>(rng.below(2)));
    LossParts parts = eat_loss(&tape, out, 0, attr_gt, cfg);
    REQUIRE(parts.has_attribute);
    tape.backward(parts.attribute);

    const Tensor* k1 = bound.lifted("trunk.b1.kernel");
    REQUIRE(k1);
    REQUIRE(k1->grad);
    float max_abs = 0.0f;
    for (float g : *k1->grad) max_abs = std::max(max_abs, std::abs(g));
    CHECK(max_abs > 0.0f);
  }
}

TEST_CASE("end-to-end gradients match the float64 shadow on a 3-class 2-attribute model") {
  for (int trial = 0; trial < 20; ++trial) {
    EatConfig cfg = micro_cfg(500 + static_cast<std::uint64_t>(trial));
    cfg.lambda = 0.8f;
    cfg.eta = 1.2f;
    EatModel model = EatModel::init(cfg);
    Rng rng(7000 + static_cast<std::uint64_t>(trial));
    Tensor img = random_image(rng, cfg.image_size);
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_classes)));
    std::vector<std::uint8_t> attr_gt;
    for (int a = 0; a < cfg.n_attributes; ++a) attr_gt.push_back(static_cast<std::uint8_t>(rng.below(2)));

    Tape tape;
    BoundParams bound(tape, model.params);
    ForwardOutputs out = eat_forward(&tape, ParamView(bound), img, cfg);
    LossParts parts = eat_loss(&tape, out, label, attr_gt, cfg);

    // shadow and float32 forward agree
    const double base = shadow_loss(model, img, label, attr_gt);
    CHECK(rel_err(base, parts.total.item(), 1e-6) < 1e-4);

    tape.backward(parts.total);

    // Small steps keep relu kink crossings rare, and the float64 shadow
    // keeps difference noise around 1e-11, so 1e-5/1e-6 are safe. The
    // analytic value must match the central difference or, at a point lying
    // exactly on a relu kink (dead units make pre-activations exactly zero),
    // the one-sided difference of the inactive side; a wrong gradient
    // matches none of them.
    auto probe_err = [&](const Tensor& at, double base_at, const std::string& name, std::size_t idx,
                         double analytic) {
      double best = 1.0;
      for (const double h : {1e-5, 1e-6}) {
        const double up = shadow_loss(model, at, label, attr_gt, name, idx, h);
        const double dn = shadow_loss(model, at, label, attr_gt, name, idx, -h);
        best = std::min(best, rel_err(analytic, (up - dn) / (2.0 * h), 1e-6));
        best = std::min(best, rel_err(analytic, (up - base_at) / h, 1e-6));
        best = std::min(best, rel_err(analytic, (base_at - dn) / h, 1e-6));
        if (best < 1e-3) break;
      }
      return best;
    };

    // Two entries from every parameter tensor, trunk kernels included. A
    // failing probe is re-tested at a jittered input: a relu unit exactly on
    // its activation boundary makes the float32 path and the float64 oracle
    // disagree at that single point, while a genuine gradient bug follows
    // the model to the new point.
    std::vector<std::pair<std::string, std::size_t>> retry;
    for (const std::string& name : model.params.names()) {
      const Tensor* lifted = bound.lifted(name);
      REQUIRE(lifted);
      REQUIRE(lifted->grad);
      const std::vector<float>& g = *lifted->grad;
      const std::size_t n = g.size();
      for (std::size_t probe = 0; probe < std::min<std::size_t>(2, n); ++probe) {
        const std::size_t idx = probe == 0 ? 0 : (n * 7 / 11) % n;
        if (probe_err(img, base, name, idx, g[idx]) >= 1e-3) retry.emplace_back(name, idx);
      }
    }

    if (!retry.empty()) {
      Tensor jittered = img;
      for (float& v : jittered.data) v = std::min(v + 0.003f, 1.0f);
      Tape tape2;
      BoundParams bound2(tape2, model.params);
      ForwardOutputs out2 = eat_forward(&tape2, ParamView(bound2), jittered, cfg);
      tape2.backward(eat_loss(&tape2, out2, label, attr_gt, cfg).total);
      const double base2 = shadow_loss(model, jittered, label, attr_gt);
      for (const auto& [name, idx] : retry) {
        const Tensor* lifted = bound2.lifted(name);
        REQUIRE(lifted);
        const double err = probe_err(jittered, base2, name, idx, (*lifted->grad)[idx]);
        INFO("parameter ", name, " entry ", idx);
        CHECK(err < 1e-3);
      }
    }
  }
}

TEST_CASE("training is deterministic and decreases the loss on one sample") {
  EatConfig cfg = micro_cfg(77);
  cfg.epochs = 50;
  cfg.lr = 0.05f;
  Dataset ds = micro_dataset(cfg, 1, 555);
  ds.samples.resize(1);  // one fixed sample

  EatModel m1 = EatModel::init(cfg);
  TrainingReport r1 = train(m1, ds);
  REQUIRE(r1.epochs.size() == 50);
  const double first = cfg.lambda * r1.epochs.front().l_c + cfg.eta * r1.epochs.front().l_a;
  const double last = cfg.lambda * r1.epochs.back().l_c + cfg.eta * r1.epochs.back().l_a;
  CHECK(last < first);
  CHECK(last < 0.05);

  EatModel m2 = EatModel::init(cfg);
  TrainingReport r2 = train(m2, ds);
  CHECK(r1.epochs.back().l_c == r2.epochs.back().l_c);  // bitwise determinism
  for (const std::string& name : m1.params.names()) CHECK(m1.params.at(name).data == m2.params.at(name).data);
}

TEST_CASE("eta=0 training reduces to the weighted category loss") {
  EatConfig cfg = micro_cfg(78);
  cfg.eta = 0.0f;
  cfg.lambda = 1.3f;
  cfg.epochs = 2;
  Dataset ds = micro_dataset(cfg, 2, 556);
  EatModel model = EatModel::init(cfg);
  Rng rng(1);
  Tensor img = random_image(rng, cfg.image_size);
  ForwardOutputs out = eat_forward(nullptr, ParamView(model.params), img, cfg);
  LossParts parts = eat_loss(nullptr, out, 1, ds.attributes.row(1), cfg);
  CHECK(std::abs(parts.total.item() - cfg.lambda * parts.category.item()) < 1e-6);
  CHECK(train(model, ds).epochs.size() == 2);
}

TEST_CASE("predict: argmax is invariant to positive scaling of lambda and eta") {
  EatConfig cfg = micro_cfg(80);
  EatModel model = EatModel::init(cfg);
  Rng rng(21);
  for (int i = 0; i < 10; ++i) {
    Tensor img = random_image(rng, cfg.image_size);
    const int base = predict(model, img).class_index;
    EatModel scaled = model;
    scaled.cfg.lambda = cfg.lambda * 3.7f;
    scaled.cfg.eta = cfg.eta * 3.7f;
    CHECK(predict(scaled, img).class_index == base);
  }
}

TEST_CASE("predict: replayed forward pass reproduces the prediction") {
  EatConfig cfg = micro_cfg(81);
  cfg.epochs = 3;
  Dataset ds = micro_dataset(cfg, 2, 557);
  EatModel model = EatModel::init(cfg);
  train(model, ds);
  for (const Sample& s : ds.samples) {
    Prediction p = predict(model, s.image);
    ForwardOutputs replay = eat_forward(nullptr, ParamView(model.params), s.image, model.cfg);
    CHECK(p.class_index == argmax(replay.c));
    CHECK(p.outputs.c.data == replay.c.data);
  }
}

TEST_CASE("baseline mode trains only the trunk and category head") {
  EatConfig cfg = micro_cfg(82);
  cfg.mode = Mode::Baseline;
  cfg.eta = 0.0f;
  cfg.epochs = 2;
  Dataset ds = micro_dataset(cfg, 2, 558);
  EatModel model = EatModel::init(cfg);
  const std::vector<float> ga_before = model.params.at("ga1.b1.kernel").data;
  const std::vector<float> trunk_before = model.params.at("trunk.b1.kernel").data;
  TrainingReport report = train(model, ds);
  CHECK(model.params.at("ga1.b1.kernel").data == ga_before);   // untouched
  CHECK(model.params.at("trunk.b1.kernel").data != trunk_before);
  CHECK(std::isnan(report.epochs.back().l_a));
}

TEST_CASE("micro-run memorizes four images perfectly") {
  EatConfig cfg = micro_cfg(83);
  cfg.epochs = 150;
  cfg.lr = 0.02f;
  Dataset ds = micro_dataset(cfg, 2, 559);
  ds.samples.resize(4);
  for (int i = 0; i < 4; ++i) ds.samples[static_cast<std::size_t>(i)].label = i % cfg.n_classes;
  for (int i = 0; i < 4; ++i)
    ds.samples[static_cast<std::size_t>(i)].attributes = ds.attributes.row(i % cfg.n_classes);
  EatModel model = EatModel::init(cfg);
  train(model, ds);
  EvalMetrics m = evaluate(model, ds, Split::Train);
  CHECK(m.category_accuracy == doctest::Approx(1.0));
}

TEST_CASE("config validation and range advisories") {
  EatConfig cfg = micro_cfg(84);
  cfg.lambda = 2.0f;
  CHECK(cfg.warnings().size() == 1);
  cfg.eta = 0.0f;  // sanctioned baseline value
  CHECK(cfg.warnings().size() == 1);
  cfg.eta = 0.2f;
  CHECK(cfg.warnings().size() == 2);

  cfg = micro_cfg(85);
  cfg.n_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_cfg(86);
  cfg.d_e = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = micro_cfg(87);
  cfg.momentum = 1.0f;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("train rejects mismatched datasets") {
  EatConfig cfg = micro_cfg(88);
  Dataset ds = micro_dataset(cfg, 1, 560);
  ds.attributes.n_classes = cfg.n_classes + 1;
  EatModel model = EatModel::init(cfg);
  CHECK_THROWS_AS(train(model, ds), Error);
}
