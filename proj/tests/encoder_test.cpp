#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dcls/checkpoint.hpp"
#include "dcls/common.hpp"
#include "dcls/encoder.hpp"
#include "dcls/util.hpp"
#include "test_util.hpp"

using namespace dcls;
using dcls::testutil::tiny_encoder_config;

TEST_CASE("config validation") {
    EncoderConfig bad = tiny_encoder_config(20, 2);
    bad.heads = 3; // 8 % 3 != 0
    CHECK_THROWS_AS(init_model(bad), ConfigError);
    bad = tiny_encoder_config(20, 2);
    bad.dropout = 1.0;
    CHECK_THROWS_AS(init_model(bad), ConfigError);
    bad = tiny_encoder_config(20, 2);
    bad.layers = 0;
    CHECK_THROWS_AS(init_model(bad), ConfigError);
    CHECK(tiny_encoder_config(20, 2).head_dim() == 4);
}

TEST_CASE("init is deterministic per seed") {
    EncoderModel a = init_model(tiny_encoder_config(20, 2, 5));
    EncoderModel b = init_model(tiny_encoder_config(20, 2, 5));
    CHECK(a.params == b.params);
    EncoderModel c = init_model(tiny_encoder_config(20, 2, 6));
    CHECK(a.params != c.params);
    for (double p : a.params) CHECK(std::isfinite(p));
}

TEST_CASE("forward is deterministic in eval mode and attention rows are distributions") {
    EncoderModel m = init_model(tiny_encoder_config(20, 3));
    std::vector<int32_t> ids{2, 7, 9, 11, 3};
    ForwardTrace t1 = forward(m, ids, ForwardMode::classify);
    ForwardTrace t2 = forward(m, ids, ForwardMode::classify);
    CHECK(t1.hidden.a == t2.hidden.a);
    CHECK(t1.class_logits == t2.class_logits);

    for (const auto& layer : t1.attention) {
        for (const auto& head : layer) {
            for (int i = 0; i < head.rows; ++i) {
                double sum = 0.0;
                for (int j = 0; j < head.cols; ++j) {
                    CHECK(head.at(i, j) >= 0.0);
                    sum += head.at(i, j);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
    CHECK(t1.pooled.size() == static_cast<size_t>(m.config.dim));
    for (double v : t1.class_logits) CHECK(std::isfinite(v));
}

TEST_CASE("single-token sequence has attention row [1.0]") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    ForwardTrace t = forward(m, std::vector<int32_t>{2}, ForwardMode::classify);
    for (const auto& layer : t.attention)
        for (const auto& head : layer) CHECK(head.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("forward rejects overlong and invalid input") {
    EncoderConfig cfg = tiny_encoder_config(20, 2);
    cfg.max_len = 4;
    EncoderModel m = init_model(cfg);
    CHECK_THROWS_AS(forward(m, std::vector<int32_t>{1, 2, 3, 4, 5}, ForwardMode::classify),
                    ConfigError);
    CHECK_THROWS_AS(forward(m, std::vector<int32_t>{}, ForwardMode::classify), ConfigError);
    CHECK_THROWS_AS(forward(m, std::vector<int32_t>{25}, ForwardMode::classify), ConfigError);
}

TEST_CASE("lm mode fills per-position vocab logits") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    std::vector<int32_t> ids{2, 7, 9, 3};
    ForwardTrace t = forward(m, ids, ForwardMode::lm);
    CHECK(t.lm_logits.rows == 4);
    CHECK(t.lm_logits.cols == 20);
    Mat rows = forward_lm_positions(m, ids, std::vector<int>{1, 2});
    for (int v = 0; v < 20; ++v) {
        CHECK(rows.at(0, v) == doctest::Approx(t.lm_logits.at(1, v)));
        CHECK(rows.at(1, v) == doctest::Approx(t.lm_logits.at(2, v)));
    }
}

TEST_CASE("ce_classify reaches 0 on a saturated correct prediction and ln 3 on uniform logits") {
    EncoderConfig cfg = tiny_encoder_config(20, 3);
    EncoderModel m = init_model(cfg);

    // zero classifier head -> logits identically 0 -> uniform over 3 classes
    const ParamInfo& wc = m.layout.find("cls.w");
    const ParamInfo& bc = m.layout.find("cls.b");
    std::fill(m.params.begin() + wc.offset, m.params.begin() + wc.offset + wc.count(), 0.0);
    std::fill(m.params.begin() + bc.offset, m.params.begin() + bc.offset + bc.count(), 0.0);

    BatchItem item;
    item.ids = {2, 7, 3};
    item.label = 1;
    BatchOptions opts;
    opts.train_mode = false;
    LossGrads lg = loss_and_grads(m, {item}, Objective::ce_classify, opts);
    CHECK(lg.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    // saturate the correct class via the bias
    m.params[bc.offset + 1] = 1000.0;
    lg = loss_and_grads(m, {item}, Objective::ce_classify, opts);
    CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ce_lm_masked with zero embeddings and lm bias equals ln V") {
    EncoderConfig cfg = tiny_encoder_config(20, 2);
    EncoderModel m = init_model(cfg);
    const ParamInfo& emb = m.layout.find("embed.tok");
    std::fill(m.params.begin() + emb.offset, m.params.begin() + emb.offset + emb.count(), 0.0);
    const ParamInfo& blm = m.layout.find("lm.b");
    std::fill(m.params.begin() + blm.offset, m.params.begin() + blm.offset + blm.count(), 0.0);

    BatchItem item;
    item.ids = {2, 4, 4, 3};
    item.target_ids = {2, 7, 9, 3};
    item.masked_positions = {1, 2};
    BatchOptions opts;
    opts.train_mode = false;
    LossGrads lg = loss_and_grads(m, {item}, Objective::ce_lm_masked, opts);
    CHECK(lg.loss == doctest::Approx(std::log(20.0)).epsilon(1e-12));
}

TEST_CASE("ce_lm_masked depends only on masked positions") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    BatchItem item;
    item.ids = {2, 4, 9, 11, 3};
    item.target_ids = {2, 7, 9, 11, 3};
    item.masked_positions = {1};
    BatchOptions opts;
    opts.train_mode = false;
    double base = loss_and_grads(m, {item}, Objective::ce_lm_masked, opts).loss;
    item.target_ids[2] = 13; // unmasked target change
    double changed = loss_and_grads(m, {item}, Objective::ce_lm_masked, opts).loss;
    CHECK(base == doctest::Approx(changed).epsilon(1e-15));
}

TEST_CASE("ce_lm_masked rejects batches with no supervised positions") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    BatchItem item;
    item.ids = {2, 7, 3};
    item.target_ids = {2, 7, 3};
    BatchOptions opts;
    opts.train_mode = false;
    CHECK_THROWS_AS(loss_and_grads(m, {item}, Objective::ce_lm_masked, opts), RuntimeError);
}

TEST_CASE("loss is invariant under batch permutation") {
    EncoderModel m = init_model(tiny_encoder_config(20, 3));
    std::vector<BatchItem> batch;
    for (int i = 0; i < 4; ++i) {
        BatchItem it;
        it.ids = {2, static_cast<int32_t>(7 + i), 9, 3};
        it.label = i % 3;
        batch.push_back(it);
    }
    BatchOptions opts;
    opts.train_mode = false;
    double a = loss_and_grads(m, batch, Objective::ce_classify, opts).loss;
    std::swap(batch[0], batch[3]);
    std::swap(batch[1], batch[2]);
    double b = loss_and_grads(m, batch, Objective::ce_classify, opts).loss;
    CHECK(a == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("dropout draws from the seed deterministically") {
    EncoderConfig cfg = tiny_encoder_config(20, 2, 7, 0.2);
    EncoderModel m = init_model(cfg);
    BatchItem item;
    item.ids = {2, 7, 9, 3};
    item.label = 1;
    BatchOptions opts;
    opts.train_mode = true;
    opts.dropout_seed = 1234;
    double a = loss_and_grads(m, {item}, Objective::ce_classify, opts).loss;
    double b = loss_and_grads(m, {item}, Objective::ce_classify, opts).loss;
    CHECK(a == doctest::Approx(b).epsilon(1e-15));
    opts.dropout_seed = 99;
    double c = loss_and_grads(m, {item}, Objective::ce_classify, opts).loss;
    CHECK(a != c);
}

TEST_CASE("optimizer: zero gradients with zero decay leave parameters unchanged") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    std::vector<double> before = m.params;
    OptimizerState st = OptimizerState::create(m, 1e-3, 0.0);
    std::vector<double> zeros(m.params.size(), 0.0);
    optimizer_step(m, zeros, st);
    CHECK(m.params == before);
    CHECK(st.step == 1);
}

TEST_CASE("optimizer updates are bitwise reproducible") {
    auto run = [] {
        EncoderModel m = init_model(tiny_encoder_config(20, 2, 11));
        OptimizerState st = OptimizerState::create(m, 1e-3, 0.01);
        BatchItem item;
        item.ids = {2, 7, 9, 3};
        item.label = 1;
        BatchOptions opts;
        opts.train_mode = false;
        for (int i = 0; i < 3; ++i) {
            LossGrads lg = loss_and_grads(m, {item}, Objective::ce_classify, opts);
            optimizer_step(m, lg.grads, st);
        }
        return m.params;
    };
    CHECK(run() == run());
}

TEST_CASE("optimizer reports the diverging parameter by name") {
    EncoderModel m = init_model(tiny_encoder_config(20, 2));
    OptimizerState st = OptimizerState::create(m, 1e-3, 0.0);
    std::vector<double> grads(m.params.size(), 0.0);
    grads[m.layout.find("cls.b").offset] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(optimizer_step(m, grads, st), doctest::Contains("cls.b"), RuntimeError);
}

TEST_CASE("checkpoint round-trips bitwise with metadata") {
    testutil::TempDir tmp("ckpt");
    EncoderModel m = init_model(tiny_encoder_config(24, 3, 13));
    auto path = tmp.path / "model.ckpt";
    save_checkpoint(m, path, {{"kind", "proxy"}, {"note", "x"}});
    LoadedCheckpoint lc = load_checkpoint(path);
    CHECK(lc.model.params == m.params);
    CHECK(lc.model.config.dim == m.config.dim);
    CHECK(lc.model.config.vocab_size == 24);
    CHECK(lc.meta.at("kind") == "proxy");
    CHECK(lc.meta.at("note") == "x");

    CHECK_THROWS_AS(load_checkpoint(tmp.path / "absent.ckpt"), RuntimeError);
    // truncated blob
    std::string content = read_file(path);
    atomic_write_file(path, content.substr(0, content.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(path), RuntimeError);
}
