#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stackplanner/errors.hpp"

namespace stackplanner::grpo {

struct DegenerateGroup : Error {
    DegenerateGroup() : Error("policy optimization: reward spread below floor") {}
};
struct KinkProximity : Error {
    KinkProximity() : Error("gradient check: ratio too close to a clip boundary") {}
};

struct Trajectory {
    std::vector<int> tokens;          // (state, action) pairs encoded as state*4+action
    std::vector<double> logp_current;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    double outcome_reward = 0.0;
    std::vector<double> token_rewards;
};

struct RolloutGroup {
    std::vector<Trajectory> trajectories;
    std::string query_id;
};

enum class RewardStatScope { TokenMultiset, PerTrajectory };
enum class DegeneratePolicy { ZeroAdvantages, Error };

struct GrpoConfig {
    double epsilon = 0.2;
    double beta = 0.0;
    int group_size = 8;
    double std_floor = 1e-8;
    RewardStatScope reward_stat_scope = RewardStatScope::TokenMultiset;
    DegeneratePolicy degenerate_policy = DegeneratePolicy::ZeroAdvantages;
};

// Every token inherits its trajectory's outcome reward.
inline void assign_token_rewards(RolloutGroup& group) {
    for (auto& t : group.trajectories)
        t.token_rewards.assign(t.tokens.size(), t.outcome_reward);
}

// Group-relative normalization. The pooled rewards are centered on the first
// pooled value before the moments are taken: algebraically a no-op, but it
// makes the result exactly invariant under reward shifts and power-of-two
// scalings whenever the inputs are exactly representable.
inline std::vector<std::vector<double>> compute_advantages(const RolloutGroup& group,
                                                           const GrpoConfig& cfg) {
    std::vector<double> pooled;
    for (const auto& t : group.trajectories) {
        if (cfg.reward_stat_scope == RewardStatScope::TokenMultiset)
            pooled.insert(pooled.end(), t.token_rewards.begin(), t.token_rewards.end());
        else
            pooled.push_back(t.outcome_reward);
    }
    std::vector<std::vector<double>> advantages(group.trajectories.size());
    if (pooled.empty()) return advantages;

    double anchor = pooled[0];
    double sum = 0.0;
    for (double r : pooled) sum += r - anchor;
    double mean_centered = sum / static_cast<double>(pooled.size());
    double var = 0.0;
    for (double r : pooled) {
        double d = (r - anchor) - mean_centered;
        var += d * d;
    }
    var /= static_cast<double>(pooled.size());
    double std_dev = std::sqrt(var);

    if (std_dev < cfg.std_floor) {
        if (cfg.degenerate_policy == DegeneratePolicy::Error) throw DegenerateGroup();
        for (size_t k = 0; k < group.trajectories.size(); ++k)
            advantages[k].assign(group.trajectories[k].tokens.size(), 0.0);
        return advantages;
    }
    double denom = std::max(std_dev, cfg.std_floor);
    for (size_t k = 0; k < group.trajectories.size(); ++k) {
        const auto& t = group.trajectories[k];
        advantages[k].reserve(t.token_rewards.size());
        for (double r : t.token_rewards)
            advantages[k].push_back(((r - anchor) - mean_centered) / denom);
    }
    return advantages;
}

constexpr double kRatioClamp = 1e6;

inline double importance_ratio(double logp_current, double logp_old) {
    double z = std::exp(logp_current - logp_old);
    return std::min(z, kRatioClamp);
}

inline double clipped_term(double z, double advantage, double epsilon) {
    double clipped = std::clamp(z, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(z * advantage, clipped * advantage);
}

// Nonnegative per-token estimator: exp(d) - d - 1 with d = logp_ref - logp_current.
inline double kl_estimate(double logp_current, double logp_ref) {
    double d = logp_ref - logp_current;
    return std::exp(d) - d - 1.0;
}

// J = (1/K) sum_k (1/|y_k|) sum_i Clip(z, A) - beta * (1/K) sum_k (1/|y_k|) sum_i kl_i.
inline double grpo_objective(const RolloutGroup& group, const GrpoConfig& cfg) {
    auto advantages = compute_advantages(group, cfg);
    double clip_sum = 0.0;
    double kl_sum = 0.0;
    size_t considered = 0;
    for (size_t k = 0; k < group.trajectories.size(); ++k) {
        const auto& t = group.trajectories[k];
        if (t.tokens.empty()) continue;
        ++considered;
        double clip_traj = 0.0;
        double kl_traj = 0.0;
        for (size_t i = 0; i < t.tokens.size(); ++i) {
            double z = importance_ratio(t.logp_current[i], t.logp_old[i]);
            clip_traj += clipped_term(z, advantages[k][i], cfg.epsilon);
            kl_traj += kl_estimate(t.logp_current[i], t.logp_ref[i]);
        }
        double n = static_cast<double>(t.tokens.size());
        clip_sum += clip_traj / n;
        kl_sum += kl_traj / n;
    }
    if (considered == 0) return 0.0;
    double K = static_cast<double>(considered);
    return clip_sum / K - cfg.beta * (kl_sum / K);
}

// --- Toy coordination environment --------------------------------------

// Desk-scale episodic environment exercising the plan/delegate/summarize/
// finish loop: start needing information, delegate to obtain it (half the
// time the memory bloats on the way), summarize only when bloated, finish
// once information is in hand. Reward 1 for exactly that; 0 otherwise.
struct SyntheticCoordinationEnv {
    static constexpr int kNumStates = 3;   // NeedInfo, InfoHeld, MemoryBloated
    static constexpr int kNumActions = 4;  // Plan, Delegate, Summarize, Finish
    static constexpr int kNeedInfo = 0;
    static constexpr int kInfoHeld = 1;
    static constexpr int kMemoryBloated = 2;
    static constexpr int kActPlan = 0;
    static constexpr int kActDelegate = 1;
    static constexpr int kActSummarize = 2;
    static constexpr int kActFinish = 3;

    struct Outcome {
        int next_state = -1;  // -1 = terminal
        double reward = 0.0;
    };

    // Uniform-random success probability: 1/4 * (1/2*1/4 + 1/2*1/4*1/4) = 0.0390625.
    static Outcome step(int state, int action, double branch_draw) {
        if (state == kNeedInfo) {
            if (action != kActDelegate) return {-1, 0.0};
            return {branch_draw < 0.5 ? kInfoHeld : kMemoryBloated, 0.0};
        }
        if (state == kInfoHeld) return {-1, action == kActFinish ? 1.0 : 0.0};
        if (state == kMemoryBloated && action == kActSummarize) return {kInfoHeld, 0.0};
        return {-1, 0.0};
    }

    static int encode_token(int state, int action) { return state * kNumActions + action; }
    static int token_state(int token) { return token / kNumActions; }
    static int token_action(int token) { return token % kNumActions; }
};

using Matrix =
    std::array<std::array<double, SyntheticCoordinationEnv::kNumActions>,
               SyntheticCoordinationEnv::kNumStates>;

struct ToyPolicy {
    Matrix logits{};  // zero-initialized: uniform policy

    std::array<double, 4> log_probs(int state) const {
        const auto& row = logits[state];
        double hi = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - hi);
        double lse = hi + std::log(sum);
        std::array<double, 4> out{};
        for (int a = 0; a < 4; ++a) out[a] = row[a] - lse;
        return out;
    }

    std::array<double, 4> probs(int state) const {
        auto lp = log_probs(state);
        std::array<double, 4> out{};
        for (int a = 0; a < 4; ++a) out[a] = std::exp(lp[a]);
        return out;
    }
};

namespace detail {

// Fixed uniform-double construction so curves replay bit-for-bit across
// platforms: top 53 bits of the engine output.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int sample_action(const ToyPolicy& policy, int state, std::mt19937_64& rng) {
    auto p = policy.probs(state);
    double u = uniform01(rng);
    double cum = 0.0;
    for (int a = 0; a < 4; ++a) {
        cum += p[a];
        if (u < cum) return a;
    }
    return 3;
}

}  // namespace detail

// One episode under the sampling policy; logp fields are filled later by
// whoever owns the current/old/reference parameter sets.
inline Trajectory sample_episode(const ToyPolicy& sampler, std::mt19937_64& rng) {
    Trajectory t;
    int state = SyntheticCoordinationEnv::kNeedInfo;
    // Hard bound of 4 steps; the environment terminates in at most 3.
    for (int i = 0; i < 4 && state >= 0; ++i) {
        int action = detail::sample_action(sampler, state, rng);
        t.tokens.push_back(SyntheticCoordinationEnv::encode_token(state, action));
        double branch = detail::uniform01(rng);
        auto outcome = SyntheticCoordinationEnv::step(state, action, branch);
        t.outcome_reward = outcome.reward;
        state = outcome.next_state;
    }
    return t;
}

inline void fill_logps(Trajectory& t, const ToyPolicy& current, const ToyPolicy& old_policy,
                       const ToyPolicy& ref) {
    t.logp_current.clear();
    t.logp_old.clear();
    t.logp_ref.clear();
    for (int token : t.tokens) {
        int s = SyntheticCoordinationEnv::token_state(token);
        int a = SyntheticCoordinationEnv::token_action(token);
        t.logp_current.push_back(current.log_probs(s)[a]);
        t.logp_old.push_back(old_policy.log_probs(s)[a]);
        t.logp_ref.push_back(ref.log_probs(s)[a]);
    }
}

// Objective as a function of the current policy parameters: recomputes only
// logp_current from the policy; sampled log-probs and rewards stay fixed.
inline double toy_objective(const ToyPolicy& policy, const RolloutGroup& group,
                            const GrpoConfig& cfg) {
    RolloutGroup local = group;
    for (auto& t : local.trajectories) {
        for (size_t i = 0; i < t.tokens.size(); ++i) {
            int s = SyntheticCoordinationEnv::token_state(t.tokens[i]);
            int a = SyntheticCoordinationEnv::token_action(t.tokens[i]);
            t.logp_current[i] = policy.log_probs(s)[a];
        }
    }
    return grpo_objective(local, cfg);
}

// Analytic gradient of toy_objective with respect to the logits.
// d logp(a|s) / d logits[s'][a'] = [s'==s] (1{a'==a} - pi(a'|s)).
// The clip term contributes a * z * dlogp where the unclipped branch is
// selected (ties included), zero elsewhere; the KL term contributes
// -beta * (1 - exp(d)) * dlogp per token.
inline Matrix toy_gradient(const ToyPolicy& policy, const RolloutGroup& group,
                           const GrpoConfig& cfg) {
    Matrix grad{};
    auto advantages = compute_advantages(group, cfg);
    size_t considered = 0;
    for (const auto& t : group.trajectories)
        if (!t.tokens.empty()) ++considered;
    if (considered == 0) return grad;
    double K = static_cast<double>(considered);

    for (size_t k = 0; k < group.trajectories.size(); ++k) {
        const auto& t = group.trajectories[k];
        if (t.tokens.empty()) continue;
        double inv_len = 1.0 / static_cast<double>(t.tokens.size());
        for (size_t i = 0; i < t.tokens.size(); ++i) {
            int s = SyntheticCoordinationEnv::token_state(t.tokens[i]);
            int a = SyntheticCoordinationEnv::token_action(t.tokens[i]);
            double logp = policy.log_probs(s)[a];
            double z = importance_ratio(logp, t.logp_old[i]);
            double adv = advantages[k][i];

            double coeff = 0.0;
            double clipped = std::clamp(z, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
            if (z * adv <= clipped * adv && z < kRatioClamp) coeff += adv * z;

            double d = t.logp_ref[i] - logp;
            coeff -= cfg.beta * (1.0 - std::exp(d));

            coeff *= inv_len / K;
            auto pi = policy.probs(s);
            for (int ap = 0; ap < 4; ++ap)
                grad[s][ap] += coeff * ((ap == a ? 1.0 : 0.0) - pi[ap]);
        }
    }
    return grad;
}

using GradientFn = Matrix (*)(const ToyPolicy&, const RolloutGroup&, const GrpoConfig&);

// Central-difference certification of the analytic gradient. Refuses to
// certify when any ratio sits within 10h of a clip boundary, where the
// objective is not differentiable. A substitute gradient function can be
// passed in to prove the check catches faults.
inline double finite_diff_check(const ToyPolicy& policy, const RolloutGroup& group,
                                const GrpoConfig& cfg, double h,
                                GradientFn gradient_fn = &toy_gradient) {
    for (const auto& t : group.trajectories) {
        for (size_t i = 0; i < t.tokens.size(); ++i) {
            int s = SyntheticCoordinationEnv::token_state(t.tokens[i]);
            int a = SyntheticCoordinationEnv::token_action(t.tokens[i]);
            double z = importance_ratio(policy.log_probs(s)[a], t.logp_old[i]);
            if (std::abs(z - (1.0 + cfg.epsilon)) <= 10.0 * h ||
                std::abs(z - (1.0 - cfg.epsilon)) <= 10.0 * h)
                throw KinkProximity();
        }
    }
    Matrix analytic = gradient_fn(policy, group, cfg);
    double max_rel_err = 0.0;
    for (int s = 0; s < SyntheticCoordinationEnv::kNumStates; ++s) {
        for (int a = 0; a < SyntheticCoordinationEnv::kNumActions; ++a) {
            ToyPolicy plus = policy;
            ToyPolicy minus = policy;
            plus.logits[s][a] += h;
            minus.logits[s][a] -= h;
            double fd = (toy_objective(plus, group, cfg) - toy_objective(minus, group, cfg)) /
                        (2.0 * h);
            double rel = std::abs(fd - analytic[s][a]) /
                         std::max(std::abs(analytic[s][a]), 1e-8);
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

// --- Toy trainer ---------------------------------------------------------

struct TrainResult {
    std::vector<double> curve;  // mean outcome reward per iteration
    ToyPolicy policy;
    ToyPolicy ref_policy;
};

// One gradient-ascent step per iteration on freshly sampled groups; the
// sampling policy is re-synced every iteration and the reference policy is
// refreshed every ref_refresh iterations.
inline TrainResult train_toy(const GrpoConfig& cfg, uint64_t seed, int iterations,
                             double step_size = 0.5, int ref_refresh = 50) {
    TrainResult result;
    ToyPolicy policy;
    ToyPolicy old_policy = policy;
    ToyPolicy ref = policy;
    std::mt19937_64 rng(seed);

    for (int iter = 0; iter < iterations; ++iter) {
        RolloutGroup group;
        group.query_id = "toy";
        double reward_sum = 0.0;
        for (int k = 0; k < cfg.group_size; ++k) {
            Trajectory t = sample_episode(old_policy, rng);
            fill_logps(t, policy, old_policy, ref);
            reward_sum += t.outcome_reward;
            group.trajectories.push_back(std::move(t));
        }
        assign_token_rewards(group);
        result.curve.push_back(reward_sum / static_cast<double>(cfg.group_size));

        Matrix grad = toy_gradient(policy, group, cfg);
        for (int s = 0; s < SyntheticCoordinationEnv::kNumStates; ++s)
            for (int a = 0; a < SyntheticCoordinationEnv::kNumActions; ++a)
                policy.logits[s][a] += step_size * grad[s][a];

        old_policy = policy;
        if (ref_refresh > 0 && (iter + 1) % ref_refresh == 0) ref = policy;
    }
    result.policy = policy;
    result.ref_policy = ref;
    return result;
}

// CSV rendering of a learning curve; full round-trip precision.
inline std::string curve_to_csv(const std::vector<double>& curve) {
    std::string out = "iteration,mean_reward\n";
    char buf[64];
    for (size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, curve[i]);
        out += buf;
    }
    return out;
}

}  // namespace stackplanner::grpo
