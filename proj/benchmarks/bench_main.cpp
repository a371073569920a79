#include <benchmark/benchmark.h>

#include <vector>

#include "tilp/fsl.hpp"
#include "tilp/harness.hpp"
#include "tilp/netphys.hpp"
#include "tilp/planner.hpp"
#include "tilp/twin.hpp"

namespace {

struct BenchSetup {
    tilp::SimConfig cfg;
    tilp::Environment env;
    tilp::StateVector state;
    tilp::TwinSnapshot snap;
    tilp::Actor actor;
    tilp::Critic critic;

    BenchSetup() {
        cfg = tilp::SimConfig::desk_default();
        cfg.master_seed = 42;
        env = tilp::make_environment(cfg);
        int n = cfg.n_terminals;
        std::vector<double> gains(n);
        std::vector<double> fading(n, 1.0);
        for (int i = 0; i < n; ++i) {
            gains[i] = env.profiles[i].large_scale_gain;
        }
        std::vector<double> zeros(n, 0.0);
        std::vector<double> norms(n, 0.3);
        state = tilp::assemble_state(gains, fading, zeros, 1.3, norms, 0.3);
        snap = tilp::TwinSnapshot{tilp::NetTwinParams::init(n),
                                  tilp::TrainTwinParams{},
                                  tilp::TaskTwinParams{},
                                  env.geometry,
                                  env.profiles,
                                  cfg};
        tilp::RngStream rng(9, 9);
        actor = tilp::Actor::make(n, static_cast<int>(cfg.split_set.size()),
                                  tilp::encoded_state_dim(n), rng);
        critic = tilp::Critic::make(
            tilp::encoded_state_dim(n),
            tilp::encoded_action_dim(n, static_cast<int>(cfg.split_set.size())),
            rng);
    }

    tilp::SystemAction action() const {
        tilp::SystemAction a;
        a.per_terminal.resize(cfg.n_terminals);
        for (auto& t : a.per_terminal) {
            t.scheduled = true;
            t.bandwidth_hz = cfg.bandwidth_budget_hz / cfg.n_terminals;
            t.power_w = 0.1;
            t.split_layer = 2;
            t.compression = 0.5;
        }
        return a;
    }
};

BenchSetup& setup() {
    static BenchSetup s;
    return s;
}

void BM_Rate(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            tilp::rate(1.25e7, 0.1, 1e-9, 1.2, 3.981e-21));
    }
}
BENCHMARK(BM_Rate);

void BM_StepFading(benchmark::State& state) {
    tilp::RngStream rng(1, 0);
    tilp::ChannelState ch = tilp::ChannelState::init(
        setup().cfg.n_terminals, 0.9, rng);
    for (auto _ : state) {
        ch = tilp::step_fading(ch, rng);
        benchmark::DoNotOptimize(ch.fading_power[0]);
    }
}
BENCHMARK(BM_StepFading);

void BM_PredictRound(benchmark::State& state) {
    BenchSetup& s = setup();
    tilp::SystemAction a = s.action();
    for (auto _ : state) {
        benchmark::DoNotOptimize(tilp::predict_round(s.snap, s.state, a));
    }
}
BENCHMARK(BM_PredictRound);

void BM_TwinRollout(benchmark::State& state) {
    BenchSetup& s = setup();
    std::vector<tilp::SystemAction> seq(s.cfg.horizon, s.action());
    tilp::RewardWeights w = tilp::RewardWeights::from_config(s.cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tilp::twin_rollout(s.snap, s.state, seq, w));
    }
}
BENCHMARK(BM_TwinRollout);

void BM_ActorSample(benchmark::State& state) {
    BenchSetup& s = setup();
    tilp::RngStream rng(3, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            tilp::actor_sample(s.actor, s.state, s.cfg, rng, 0.7));
    }
}
BENCHMARK(BM_ActorSample);

void BM_CemPlan(benchmark::State& state) {
    BenchSetup& s = setup();
    tilp::RngStream rng(4, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            tilp::cem_plan(s.state, s.snap, s.actor, s.critic, s.cfg, rng));
    }
}
BENCHMARK(BM_CemPlan)->Unit(benchmark::kMillisecond);

void BM_FslRound(benchmark::State& state) {
    BenchSetup& s = setup();
    tilp::LayeredModel model = s.env.model;
    tilp::RngStream rng(5, 0);
    const tilp::Matrix& shard = s.env.data.shard_inputs[0];
    tilp::Matrix batch(16, shard.cols);
    std::vector<int> labels(16);
    for (int r = 0; r < 16; ++r) {
        int pick = static_cast<int>(rng.next_below(shard.rows));
        std::copy(shard.row(pick).begin(), shard.row(pick).end(),
                  batch.row(r).begin());
        labels[r] = s.env.data.shard_labels[0][pick];
    }
    std::vector<tilp::DenseLayer> prefix(model.layers.begin(),
                                         model.layers.begin() + 2);
    for (auto _ : state) {
        tilp::ClientForwardCache cache;
        tilp::Matrix act = tilp::client_forward(batch, prefix, &cache);
        auto comp = tilp::compress(act, 0.5, rng);
        tilp::ServerTerminalInput input{2, &comp.payload, &labels,
                                        &comp.mask, 0.5, 1.0};
        auto res = tilp::server_step(model, {&input, 1}, 0.05);
        tilp::client_step(cache, res.split_grads[0], prefix, 0.05, true);
        benchmark::DoNotOptimize(res.loss);
    }
}
BENCHMARK(BM_FslRound);

}  // namespace

BENCHMARK_MAIN();
