#include "dcls/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "dcls/common.hpp"

namespace dcls {

void NoiseSchedule::validate() const {
    if (total_steps < 1) throw ConfigError("schedule total_steps must be >= 1");
    if (lambda < 0.0) throw ConfigError("schedule lambda must be >= 0");
}

TokenWeights token_weights(const ForwardTrace& trace, const TokenizedSample& sample) {
    const size_t L = sample.ids.size();
    if (trace.hidden.rows != static_cast<int>(L))
        throw ConfigError("trace length does not match sample length");
    const auto& last = trace.last_attention();
    const int H = static_cast<int>(last.size());

    TokenWeights w;
    w.raw.assign(L, 0.0);
    for (int h = 0; h < H; ++h) {
        const double* cls_row = last[h].row(0);
        for (size_t i = 0; i < L; ++i) w.raw[i] += cls_row[i];
    }
    for (size_t i = 0; i < L; ++i) w.raw[i] /= H;

    w.normalized.assign(L, 0.0);
    double mx = 0.0;
    for (size_t i = 0; i < L; ++i)
        if (sample.maskable[i]) mx = std::max(mx, w.raw[i]);
    if (mx > 0.0)
        for (size_t i = 0; i < L; ++i)
            if (sample.maskable[i]) w.normalized[i] = w.raw[i] / mx;
    return w;
}

double sinus_modulation(int t, int total_steps) {
    if (t < 0 || t > total_steps) throw ConfigError("step out of range");
    return std::sin(static_cast<double>(t) * M_PI / total_steps);
}

double survival_prob(int t, int total_steps, double lambda, double w) {
    double q = 1.0 - static_cast<double>(t) / total_steps -
               lambda * sinus_modulation(t, total_steps) * w;
    return std::clamp(q, 0.0, 1.0);
}

double effective_survival(int t, int total_steps, double lambda, double w) {
    if (t < 0 || t > total_steps) throw ConfigError("step out of range");
    double mn = 1.0;
    for (int s = 0; s <= t; ++s) mn = std::min(mn, survival_prob(s, total_steps, lambda, w));
    return mn;
}

int mask_time(double u, double w, const NoiseSchedule& schedule) {
    schedule.validate();
    const int T = schedule.total_steps;
    double mn = 1.0;
    for (int t = 1; t <= T; ++t) {
        mn = std::min(mn, survival_prob(t, T, schedule.lambda, w));
        if (u >= mn) return t;
    }
    return T; // survival hits 0 at T, and u < 1, so this is unreachable
}

MaskTrajectory sample_trajectory(const TokenizedSample& sample, const TokenWeights& weights,
                                 const NoiseSchedule& schedule, RngStream& rng) {
    schedule.validate();
    const size_t L = sample.ids.size();
    if (weights.normalized.size() != L)
        throw ConfigError("weights are not aligned with the sample");

    MaskTrajectory traj;
    traj.ids = sample.ids;
    traj.maskable = sample.maskable;
    traj.schedule = schedule;
    traj.u.assign(L, 0.0);
    traj.mask_time.assign(L, MaskTrajectory::kNever);
    for (size_t i = 0; i < L; ++i) {
        if (!sample.maskable[i]) continue;
        traj.u[i] = rng.uniform();
        traj.mask_time[i] = mask_time(traj.u[i], weights.normalized[i], schedule);
    }
    return traj;
}

std::vector<int32_t> corrupt_at_step(const MaskTrajectory& traj, int t) {
    if (t < 0 || t > traj.schedule.total_steps) throw ConfigError("step out of range");
    std::vector<int32_t> out = traj.ids;
    for (size_t i = 0; i < out.size(); ++i)
        if (traj.mask_time[i] <= t) out[i] = Vocab::kMask;
    return out;
}

StepGroups step_groups(int total_steps, int num_groups) {
    if (total_steps < 1 || num_groups < 1) throw ConfigError("step grouping needs positive sizes");
    if (total_steps % num_groups != 0)
        throw ConfigError("num_groups must divide total_steps: " + std::to_string(num_groups) +
                          " does not divide " + std::to_string(total_steps));
    return StepGroups{total_steps, num_groups};
}

std::pair<int, int> StepGroups::range(int group_index) const {
    if (group_index < 1 || group_index > num_groups)
        throw ConfigError("group index out of range: " + std::to_string(group_index));
    int size = group_size();
    return {(group_index - 1) * size + 1, group_index * size};
}

} // namespace dcls
