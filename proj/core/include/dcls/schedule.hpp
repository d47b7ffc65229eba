#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"
#include "dcls/rng.hpp"

namespace dcls {

// Per-token label-relatedness weights: mean CLS-row attention across heads in
// the last layer, then max-normalized over maskable positions.
struct TokenWeights {
    std::vector<double> raw;        // mean attention, all positions
    std::vector<double> normalized; // in [0,1], 0 at non-maskable positions
};

struct NoiseSchedule {
    int total_steps = 32;
    double lambda = 0.5;
    void validate() const; // throws ConfigError
};

// raw w_i = (1/H) sum_h attention(head h, query=CLS, key=i), last layer.
// normalized = raw / max(raw over maskable positions), or all zeros if that
// max is 0; non-maskable positions are zeroed.
TokenWeights token_weights(const ForwardTrace& trace, const TokenizedSample& sample);

// sin(t*pi/T); t must lie in [0, T].
double sinus_modulation(int t, int total_steps);

// Probability that a token with normalized weight w is still unmasked at
// step t: clamp(1 - t/T - lambda * sin(t*pi/T) * w, 0, 1).
double survival_prob(int t, int total_steps, double lambda, double w);

// Running minimum of survival_prob over steps 0..t. Non-increasing in t by
// construction, which keeps the forward process absorbing.
double effective_survival(int t, int total_steps, double lambda, double w);

// First step at which a token with coupling draw u becomes masked:
// min{ t in 1..T : u >= effective_survival(t) }.
int mask_time(double u, double w, const NoiseSchedule& schedule);

// One coupled nested masking of a sequence: a single uniform draw per token
// is reused across all steps, so mask sets are nested and one trajectory
// serves every corruption level.
struct MaskTrajectory {
    static constexpr int32_t kNever = std::numeric_limits<int32_t>::max();

    std::vector<int32_t> ids;       // source ids
    std::vector<uint8_t> maskable;
    std::vector<double> u;          // coupling draws (0 at non-maskable)
    std::vector<int32_t> mask_time; // kNever at non-maskable positions
    NoiseSchedule schedule;

    bool masked_at(size_t pos, int t) const { return mask_time[pos] <= t; }
};

MaskTrajectory sample_trajectory(const TokenizedSample& sample, const TokenWeights& weights,
                                 const NoiseSchedule& schedule, RngStream& rng);

// Copy of the source ids with every position masked by step t replaced by
// [MASK]. t must lie in [0, T].
std::vector<int32_t> corrupt_at_step(const MaskTrajectory& traj, int t);

// Partition of steps 1..T into num_groups contiguous groups of equal size.
struct StepGroups {
    int total_steps = 0;
    int num_groups = 0;

    int group_size() const { return total_steps / num_groups; }
    // 1-based group index -> inclusive [first, last] step range.
    std::pair<int, int> range(int group_index) const;
};

StepGroups step_groups(int total_steps, int num_groups);

} // namespace dcls
