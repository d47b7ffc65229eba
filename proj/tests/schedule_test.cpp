#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "dcls/common.hpp"
#include "dcls/corpus.hpp"
#include "dcls/schedule.hpp"
#include "test_util.hpp"

using namespace dcls;

namespace {

// Trace stub with a chosen last-layer CLS attention row, uniform elsewhere.
ForwardTrace fake_trace(const std::vector<std::vector<double>>& cls_rows_per_head, int L) {
    ForwardTrace t;
    t.hidden = Mat(L, 4);
    t.attention.resize(1);
    for (const auto& row : cls_rows_per_head) {
        Mat a(L, L);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) a.at(i, j) = 1.0 / L;
        for (int j = 0; j < L; ++j) a.at(0, j) = row[j];
        t.attention[0].push_back(a);
    }
    return t;
}

TokenizedSample sample_with_flags(std::vector<uint8_t> maskable) {
    TokenizedSample s;
    s.ids.assign(maskable.size(), Vocab::kCls);
    s.label_id = 0;
    s.maskable = std::move(maskable);
    return s;
}

} // namespace

TEST_CASE("token_weights averages CLS attention across heads") {
    const int L = 4;
    // uniform attention, two heads: raw = 1/L everywhere
    ForwardTrace t = fake_trace({{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}}, L);
    TokenizedSample s = sample_with_flags({0, 1, 1, 0});
    TokenWeights w = token_weights(t, s);
    for (int i = 0; i < L; ++i) CHECK(w.raw[i] == doctest::Approx(0.25));
    CHECK(w.normalized[0] == 0.0);
    CHECK(w.normalized[1] == doctest::Approx(1.0));
    CHECK(w.normalized[2] == doctest::Approx(1.0));
    CHECK(w.normalized[3] == 0.0);
}

TEST_CASE("token_weights max-normalizes over maskable positions") {
    const int L = 5;
    ForwardTrace t = fake_trace({{0.2, 0.1, 0.4, 0.2, 0.1}}, L);
    TokenizedSample s = sample_with_flags({0, 1, 1, 1, 0});
    TokenWeights w = token_weights(t, s);
    CHECK(w.normalized[1] == doctest::Approx(0.25));
    CHECK(w.normalized[2] == doctest::Approx(1.0));
    CHECK(w.normalized[3] == doctest::Approx(0.5));
    CHECK(w.normalized[0] == 0.0);
    CHECK(w.normalized[4] == 0.0);
}

TEST_CASE("token_weights degenerates to zeros when raw weights vanish") {
    const int L = 3;
    ForwardTrace t = fake_trace({{0.0, 0.0, 0.0}}, L);
    TokenizedSample s = sample_with_flags({0, 1, 0});
    TokenWeights w = token_weights(t, s);
    for (double x : w.normalized) CHECK(x == 0.0);
}

TEST_CASE("token_weights rejects misaligned traces") {
    ForwardTrace t = fake_trace({{0.5, 0.5}}, 2);
    TokenizedSample s = sample_with_flags({0, 1, 1, 0});
    CHECK_THROWS_AS(token_weights(t, s), ConfigError);
}

TEST_CASE("sinusoidal modulation endpoints and midpoint") {
    CHECK(sinus_modulation(0, 32) == doctest::Approx(0.0));
    CHECK(sinus_modulation(16, 32) == doctest::Approx(1.0));
    CHECK(std::abs(sinus_modulation(32, 32)) < 1e-12);
    CHECK_THROWS_AS(sinus_modulation(-1, 32), ConfigError);
    CHECK_THROWS_AS(sinus_modulation(33, 32), ConfigError);
}

TEST_CASE("survival probability closed-form values") {
    CHECK(survival_prob(0, 32, 0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(survival_prob(32, 32, 0.5, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(survival_prob(16, 32, 0.5, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    // 1 - 8/32 - 0.5*sin(pi/4)*0.5 = 0.75 - sqrt(2)/8
    double expected = 0.75 - std::sqrt(2.0) / 8.0;
    CHECK(survival_prob(8, 32, 0.5, 0.5) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(survival_prob(8, 32, 0.5, 0.5) == doctest::Approx(0.5732233047).epsilon(1e-9));
}

TEST_CASE("survival probability clamps into [0,1]") {
    for (int t = 0; t <= 32; ++t) {
        double q = survival_prob(t, 32, 2.0, 1.0);
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
    }
}

TEST_CASE("effective survival is the running minimum") {
    // monotone case: identical to survival_prob
    for (int t = 0; t <= 32; ++t)
        CHECK(effective_survival(t, 32, 0.0, 0.7) ==
              doctest::Approx(survival_prob(t, 32, 0.0, 0.7)));
    // w=0: exactly the linear schedule
    for (int t = 0; t <= 32; ++t)
        CHECK(effective_survival(t, 32, 0.5, 0.0) == doctest::Approx(1.0 - t / 32.0));
    // lambda=0.5, w=1: zero from t=16 on
    for (int t = 16; t <= 32; ++t) CHECK(effective_survival(t, 32, 0.5, 1.0) == 0.0);
}

TEST_CASE("effective survival is non-increasing with unit endpoints") {
    for (double lambda : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        for (double w : {0.0, 0.25, 0.5, 0.8, 1.0}) {
            CHECK(effective_survival(0, 32, lambda, w) == doctest::Approx(1.0));
            CHECK(effective_survival(32, 32, lambda, w) == doctest::Approx(0.0));
            double prev = 1.0;
            for (int t = 0; t <= 32; ++t) {
                double cur = effective_survival(t, 32, lambda, w);
                CHECK(cur <= prev + 1e-15);
                prev = cur;
            }
        }
    }
}

TEST_CASE("mask_time boundary draws") {
    NoiseSchedule sched{32, 0.5};
    // u=0 is only reached when survival hits zero
    CHECK(mask_time(0.0, 0.0, sched) == 32);
    CHECK(mask_time(0.0, 1.0, sched) == 16);
    // u=0.999 crosses at the first step for w=0: survival(1) = 31/32
    CHECK(mask_time(0.999, 0.0, sched) == 1);
}

TEST_CASE("mask_time is non-increasing in the token weight for fixed u") {
    NoiseSchedule sched{32, 0.5};
    const double ws[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int ui = 0; ui < 1000; ++ui) {
        double u = ui / 1000.0;
        int prev = sched.total_steps + 1;
        for (double w : ws) {
            int mt = mask_time(u, w, sched);
            CHECK(mt <= prev);
            prev = mt;
        }
    }
}

TEST_CASE("sample_trajectory yields nested masks covering all maskable positions") {
    auto samples = synth_corpus({{{"pos", 4}, {"neg", 4}}, 5});
    Vocab v = build_vocab(samples, 1);
    NoiseSchedule sched{32, 0.5};
    for (uint64_t seed = 0; seed < 50; ++seed) {
        RngStream rng(seed);
        for (const auto& raw : samples) {
            TokenizedSample s = tokenize(v, raw);
            TokenWeights w;
            w.raw.assign(s.ids.size(), 0.0);
            w.normalized.assign(s.ids.size(), 0.0);
            RngStream wrng(seed + 1000);
            for (size_t i = 0; i < s.ids.size(); ++i)
                if (s.maskable[i]) w.normalized[i] = wrng.uniform();
            MaskTrajectory traj = sample_trajectory(s, w, sched, rng);

            std::set<size_t> prev;
            for (int t = 0; t <= sched.total_steps; ++t) {
                std::set<size_t> cur;
                for (size_t i = 0; i < s.ids.size(); ++i)
                    if (traj.masked_at(i, t)) cur.insert(i);
                for (size_t i : prev) CHECK(cur.count(i) == 1); // nesting
                if (t == 0) CHECK(cur.empty());
                prev = cur;
            }
            for (size_t i = 0; i < s.ids.size(); ++i) {
                if (s.maskable[i])
                    CHECK(traj.mask_time[i] <= sched.total_steps);
                else
                    CHECK(traj.mask_time[i] == MaskTrajectory::kNever);
            }
        }
    }
}

TEST_CASE("trajectory marginals match effective survival within 3 standard errors") {
    NoiseSchedule sched{32, 0.5};
    const int N = 4000;
    for (double w : {0.0, 0.3, 0.7, 1.0}) {
        std::vector<int> unmasked_at(sched.total_steps + 1, 0);
        RngStream rng(99);
        for (int n = 0; n < N; ++n) {
            int mt = mask_time(rng.uniform(), w, sched);
            for (int t = 0; t < mt && t <= sched.total_steps; ++t) unmasked_at[t]++;
        }
        for (int t = 0; t <= sched.total_steps; ++t) {
            double p = effective_survival(t, 32, 0.5, w);
            double phat = static_cast<double>(unmasked_at[t]) / N;
            double se = std::sqrt(p * (1.0 - p) / N);
            CHECK(std::abs(phat - p) <= 3.0 * se + 1e-12);
        }
    }
}

TEST_CASE("corrupt_at_step masks exactly the positions due by t") {
    auto samples = synth_corpus({{{"pos", 1}}, 9});
    Vocab v = build_vocab(samples, 1);
    TokenizedSample s = tokenize(v, samples[0]);
    TokenWeights w;
    w.raw.assign(s.ids.size(), 0.5);
    w.normalized.assign(s.ids.size(), 0.0);
    for (size_t i = 0; i < s.ids.size(); ++i)
        if (s.maskable[i]) w.normalized[i] = 0.5;
    NoiseSchedule sched{32, 0.5};
    RngStream rng(3);
    MaskTrajectory traj = sample_trajectory(s, w, sched, rng);

    CHECK(corrupt_at_step(traj, 0) == s.ids);
    auto at_T = corrupt_at_step(traj, sched.total_steps);
    for (size_t i = 0; i < s.ids.size(); ++i) {
        if (s.maskable[i])
            CHECK(at_T[i] == Vocab::kMask);
        else
            CHECK(at_T[i] == s.ids[i]);
    }
    for (int t = 0; t < sched.total_steps; ++t) {
        auto a = corrupt_at_step(traj, t);
        auto b = corrupt_at_step(traj, t + 1);
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i] == Vocab::kMask) CHECK(b[i] == Vocab::kMask);
    }
    CHECK_THROWS_AS(corrupt_at_step(traj, -1), ConfigError);
    CHECK_THROWS_AS(corrupt_at_step(traj, 33), ConfigError);
}

TEST_CASE("step groups partition 1..T into contiguous equal ranges") {
    StepGroups g = step_groups(32, 8);
    CHECK(g.range(4) == std::pair<int, int>{13, 16});
    CHECK(g.range(1).first == 1);
    CHECK(g.range(8).second == 32);
    int covered = 0;
    for (int i = 1; i <= 8; ++i) {
        auto [lo, hi] = g.range(i);
        covered += hi - lo + 1;
    }
    CHECK(covered == 32);
    CHECK_THROWS_AS(step_groups(32, 5), ConfigError);
    CHECK_THROWS_AS(g.range(0), ConfigError);
    CHECK_THROWS_AS(g.range(9), ConfigError);
}
