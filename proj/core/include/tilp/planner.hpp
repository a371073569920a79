#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tilp/action.hpp"
#include "tilp/config.hpp"
#include "tilp/mdp.hpp"
#include "tilp/nn.hpp"
#include "tilp/rng.hpp"
#include "tilp/twin.hpp"

namespace tilp {

/// Stochastic policy: a shared trunk over the encoded state feeding one
/// linear head per terminal. Each head emits means and log-stds for the
/// three pre-squash continuous coordinates (bandwidth, power, compression),
/// logits over the split set and one scheduling logit.
struct Actor {
    Mlp net;
    int n_terminals = 0;
    int n_splits = 0;

    static Actor make(int n_terminals, int n_splits, int state_dim,
                      RngStream& rng);

    int head_size() const { return 7 + n_splits; }
};

/// Q(s, a) network plus its slowly-blended target copy.
struct Critic {
    Mlp net;
    Mlp target;

    static Critic make(int state_dim, int action_dim, RngStream& rng);
};

/// Bounded featurization of a StateVector for the nets.
std::vector<double> encode_state(const StateVector& state,
                                 const SimConfig& cfg);
int encoded_state_dim(int n_terminals);

/// Hard action encoding for replayed transitions: normalized continuous
/// coordinates, one-hot split, binary schedule flag.
std::vector<double> encode_action(const SystemAction& action,
                                  const SimConfig& cfg);
int encoded_action_dim(int n_terminals, int n_splits);

/// Exogenous noise consumed by one policy sample, drawn once so the sample
/// is a deterministic, differentiable function of the parameters.
struct ActorNoise {
    std::vector<double> eps;     // 3 per terminal, reparameterized normals
    std::vector<double> gumbel;  // n_splits per terminal
    std::vector<double> usched;  // 1 per terminal, uniform
};

ActorNoise draw_actor_noise(int n_terminals, int n_splits, RngStream& rng);

struct SampledAction {
    SystemAction action;  // projected, hard-feasible
    double log_prob = 0.0;
    std::vector<double> encoding;  // relaxed encoding for gradient flow
};

SampledAction actor_sample_with_noise(const Actor& actor,
                                      const StateVector& state,
                                      const SimConfig& cfg,
                                      const ActorNoise& noise,
                                      double temperature);

SampledAction actor_sample(const Actor& actor, const StateVector& state,
                           const SimConfig& cfg, RngStream& rng,
                           double temperature);

/// Deterministic head: squashed means, argmax split (ties to the lowest
/// index), schedule on when its probability reaches one half; projected.
SystemAction actor_mean(const Actor& actor, const StateVector& state,
                        const SimConfig& cfg);

/// Monte-Carlo estimate of E_{a~pi}[Q(s, a)] over the given noise records.
double terminal_value(const Actor& actor, const Critic& critic,
                      const StateVector& state, const SimConfig& cfg,
                      std::span<const ActorNoise> noises, double temperature);

double terminal_value(const Actor& actor, const Critic& critic,
                      const StateVector& state, const SimConfig& cfg,
                      int n_samples, RngStream& rng, double temperature);

/// CEM sampling distribution over K-step action sequences, one independent
/// block per (step, terminal): pre-squash Gaussian moments for the
/// continuous coordinates, a categorical over the split set and a Bernoulli
/// schedule probability.
struct CemDistribution {
    int horizon = 0;
    int n_terminals = 0;
    int n_splits = 0;
    std::vector<double> mean;  // 3 * N * K
    std::vector<double> stdev; // 3 * N * K, floored
    std::vector<double> cat;   // N * K * S, rows sum to one
    std::vector<double> bern;  // N * K, clamped away from 0 and 1

    static CemDistribution from_actor(const Actor& actor,
                                      const StateVector& state,
                                      const SimConfig& cfg);
};

inline constexpr double kCemStdFloor = 0.05;
inline constexpr double kCemBernMin = 0.02;
inline constexpr double kCemBernMax = 0.98;

struct CemIterDiag {
    double best_score = 0.0;        // best score seen so far
    double mean_elite_score = 0.0;  // this iteration's elite mean
    double pop_std = 0.0;           // score spread of this population
};

struct CemResult {
    SystemAction action;
    double best_score = 0.0;
    double prior_score = 0.0;  // score of the actor-mean repeat seed
    std::vector<CemIterDiag> iters;
};

/// Receding-horizon search: initialize the distribution from the actor,
/// iterate sample/score/refit against the frozen twin, and return the first
/// action of the best sequence ever scored. The actor-mean repeat is seeded
/// into the first population, so the returned score never falls below the
/// prior's. Candidate scoring parallelizes across TILP_THREADS workers.
CemResult cem_plan(const StateVector& state, const TwinSnapshot& snap,
                   const Actor& actor, const Critic& critic,
                   const SimConfig& cfg, RngStream& rng);

/// Score one fixed K-step sequence the same way cem_plan scores candidates.
double score_sequence(std::span<const SystemAction> actions,
                      const StateVector& state, const TwinSnapshot& snap,
                      const Actor& actor, const Critic& critic,
                      const SimConfig& cfg,
                      std::span<const ActorNoise> value_noises,
                      double temperature);

struct ReplayEntry {
    StateVector state;
    SystemAction action;
    double reward = 0.0;
    StateVector next_state;
    bool done = false;
    bool imagined = false;
};

struct ReplayBuffer {
    std::size_t capacity = 200000;
    std::vector<ReplayEntry> entries;
    std::size_t write_pos = 0;

    void push(ReplayEntry e);
    std::size_t size() const { return entries.size(); }
    const ReplayEntry& sample(RngStream& rng) const;
};

/// Draw a batch at an exact 1:1 real-to-imagined ratio (all-real when the
/// imagined buffer is empty).
std::vector<ReplayEntry> sample_batch(const ReplayBuffer& real,
                                      const ReplayBuffer& imagined,
                                      int batch_size, RngStream& rng);

struct SacHyper {
    double lr = 3e-4;
    double alpha = 0.05;         // entropy coefficient, fixed
    double tau = 0.01;           // target blend rate
    double gumbel_temp = 0.7;    // relaxation temperature, fixed
    double clip_norm = 5.0;
};

/// Discrete outcomes frozen at sampling time so the actor objective is a
/// smooth function of the parameters (straight-through offsets included).
struct FrozenSamples {
    std::vector<int> split_choice;       // N per state
    std::vector<std::uint8_t> sched;     // N per state
    std::vector<double> sched_offset;    // z - sigmoid(logit) at freeze time
};

FrozenSamples freeze_samples(const Actor& actor,
                             std::span<const StateVector> states,
                             std::span<const ActorNoise> noises,
                             const SimConfig& cfg);

/// Mean over states of alpha*log pi(a|s) - Q(s, a) with reparameterized
/// continuous coordinates, Gumbel-softmax split relaxation and
/// straight-through schedules. Gradients (optional) are exact for this
/// objective, which is what the finite-difference audit checks.
double actor_objective(const Actor& actor, const Critic& critic,
                       std::span<const StateVector> states,
                       std::span<const ActorNoise> noises,
                       const FrozenSamples& frozen, double alpha,
                       double temperature, const SimConfig& cfg,
                       std::vector<double>* grad_out);

/// Mean squared Bellman error of the online critic against fixed targets.
double critic_objective(const Critic& critic,
                        std::span<const ReplayEntry> batch,
                        std::span<const double> targets,
                        const SimConfig& cfg, std::vector<double>* grad_out);

/// Bootstrap targets r + gamma * (Q_target(s', a'~pi) - alpha*log pi).
std::vector<double> critic_targets(const Actor& actor, const Critic& critic,
                                   std::span<const ReplayEntry> batch,
                                   const SacHyper& hyper,
                                   const SimConfig& cfg, RngStream& rng);

struct SacResult {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    bool applied = false;
};

/// One soft actor-critic step on a mixed batch: critic regression, actor
/// ascent, gradient-norm clipping at clip_norm, Adam, then a soft target
/// update. A non-finite loss leaves every parameter untouched.
SacResult sac_update(Actor& actor, Critic& critic, AdamState& actor_opt,
                     AdamState& critic_opt,
                     std::span<const ReplayEntry> batch,
                     const SacHyper& hyper, const SimConfig& cfg,
                     RngStream& rng);

/// U imagined transitions under the current policy inside the frozen twin,
/// rewards computed on predicted quantities.
std::vector<ReplayEntry> imagine_rollout(const Actor& actor,
                                         const TwinSnapshot& snap,
                                         const StateVector& state, int steps,
                                         const SimConfig& cfg,
                                         const RewardWeights& w,
                                         const SacHyper& hyper,
                                         RngStream& rng);

/// CEM worker cap from TILP_THREADS (0 or unset means automatic).
int planner_thread_count();

}  // namespace tilp
