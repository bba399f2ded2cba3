// Trainer: loss composition, determinism, two-phase behaviour, checkpoint
// round trips, full-chain gradient integrity at small scale.

#include "oshape/gradcheck.hpp"
#include "oshape/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "checks.hpp"

using namespace oshape;
using namespace testing;

static TrainConfig small_cfg() {
    TrainConfig cfg;
    cfg.m = 16;
    cfg.n_data = 8;
    cfg.batch_symbols = 256;
    cfg.snr_db = 10.0;
    cfg.seed = 11;
    cfg.steps_phase1 = 40;
    cfg.steps_phase2 = 40;
    return cfg;
}

static void test_entropy_uniform() {
    // zeroed NN1 weights give exactly uniform probabilities
    Rng rng(1);
    ShapingModel model;
    model.init(16, rng);
    for (Tensor& w : model.nn1.weights) w.fill(0.0);
    for (Tensor& b : model.nn1.biases) b.fill(0.0);
    TrainConfig cfg = small_cfg();
    Rng noise_rng(2);
    LossBreakdown b = forward_batch(model, cfg, noise_rng, 1);
    check_close(b.entropy, std::log(16.0), 1e-12, "uniform entropy is ln M");
}

static void test_initial_cross_entropy() {
    TrainConfig cfg = small_cfg();
    Rng rng(cfg.seed);
    ShapingModel model;
    model.init(cfg.m, rng);
    Rng noise_rng(3);
    LossBreakdown b = forward_batch(model, cfg, noise_rng, 1);
    double ln_m = std::log(16.0);
    check(std::abs(b.cross_entropy - ln_m) < 0.2 * ln_m,
          "untrained cross entropy within 20% of ln 16 (got " +
              std::to_string(b.cross_entropy) + ")");
    check_lt(b.mi_nats(), b.entropy + 1e-12, "MI bound never exceeds the entropy");
    check_close(b.total, b.cross_entropy - b.entropy, 1e-12, "phase-1 total is CE - H");
}

static void test_phase2_total() {
    TrainConfig cfg = small_cfg();
    cfg.lambda = 0.02;
    Rng rng(cfg.seed);
    ShapingModel model;
    model.init(cfg.m, rng);
    Rng noise_rng(4);
    LossBreakdown b = forward_batch(model, cfg, noise_rng, 2);
    check_close(b.total, b.cross_entropy - b.entropy + cfg.lambda * b.papr_term, 1e-12,
                "phase-2 total is CE - H + lambda*PAPR");
}

static void test_forward_determinism() {
    TrainConfig cfg = small_cfg();
    Rng rng(cfg.seed);
    ShapingModel model;
    model.init(cfg.m, rng);
    Rng n1(5), n2(5);
    LossBreakdown a = forward_batch(model, cfg, n1, 2);
    LossBreakdown b = forward_batch(model, cfg, n2, 2);
    check(a.total == b.total && a.cross_entropy == b.cross_entropy &&
              a.papr_term == b.papr_term,
          "identical noise streams give bitwise identical losses");
}

static void test_trace_determinism() {
    TrainConfig cfg = small_cfg();
    cfg.steps_phase1 = 15;
    cfg.steps_phase2 = 15;
    TrainRun r1 = train_two_phase(cfg);
    TrainRun r2 = train_two_phase(cfg);
    check(r1.trace.size() == r2.trace.size(), "trace lengths agree");
    bool same = true;
    for (std::size_t i = 0; i < r1.trace.size(); ++i)
        if (r1.trace[i].loss.total != r2.trace[i].loss.total) same = false;
    check(same, "identical configs give identical loss traces");
    check(r1.final_eval_loss == r2.final_eval_loss, "final eval loss is deterministic");
}

static void test_lambda_zero_phase2_is_continuation() {
    TrainConfig a = small_cfg();
    a.lambda = 0.0;
    a.steps_phase1 = 20;
    a.steps_phase2 = 20;
    TrainConfig b = a;
    b.steps_phase1 = 40;
    b.steps_phase2 = 0;
    TrainRun ra = train_two_phase(a);
    TrainRun rb = train_two_phase(b);
    auto na = ra.model.named_tensors();
    auto nb = rb.model.named_tensors();
    bool same = true;
    for (std::size_t i = 0; i < na.size(); ++i)
        if (na[i].second->data != nb[i].second->data) same = false;
    check(same, "lambda=0 phase 2 is a bitwise phase-1 continuation");
}

static void test_loss_trend() {
    TrainConfig cfg = small_cfg();
    cfg.steps_phase1 = 300;
    cfg.steps_phase2 = 0;
    TrainRun run = train_two_phase(cfg);
    std::vector<double> window_means;
    for (std::size_t start = 0; start + 100 <= run.trace.size(); start += 100) {
        double acc = 0.0;
        for (std::size_t i = start; i < start + 100; ++i) acc += run.trace[i].loss.total;
        window_means.push_back(acc / 100.0);
    }
    for (std::size_t k = 1; k < window_means.size(); ++k)
        check_lt(window_means[k], window_means[k - 1] + 0.02,
                 "smoothed phase-1 loss is nonincreasing");
    check_lt(window_means.back(), window_means.front(), "training makes progress");
}

static void test_noiseless_convergence() {
    // with no channel noise the demapper should become near-deterministic,
    // pushing CE toward zero and the MI bound toward H
    TrainConfig cfg;
    cfg.m = 4;
    cfg.n_data = 4;
    cfg.batch_symbols = 128;
    cfg.snr_db = 200.0; // sigma2 ~ 2.5e-21
    cfg.steps_phase1 = 300;
    cfg.steps_phase2 = 0;
    cfg.seed = 21;
    TrainRun run = train_two_phase(cfg);
    Rng eval_rng(1234);
    LossBreakdown b = forward_batch(run.model, cfg, eval_rng, 1);
    check_lt(b.entropy - b.mi_nats(), 0.05,
             "noiseless MI bound within 0.05 nats of the entropy (CE=" +
                 std::to_string(b.cross_entropy) + ")");
}

static void test_divergence_guard() {
    // an absurd PAPR weight makes the phase-2 loss jump orders of magnitude
    // above the phase-1 scale and stay there
    TrainConfig cfg = small_cfg();
    cfg.lambda = 100.0;
    cfg.steps_phase1 = 20;
    cfg.steps_phase2 = 200;
    bool threw = false;
    std::size_t trace_len = 0;
    try {
        train_two_phase(cfg);
    } catch (const TrainError& e) {
        threw = true;
        trace_len = e.trace.size();
    }
    check(threw, "sustained loss blow-up trips the divergence guard");
    check(trace_len >= 100, "abort carries the trace so far");
}

static void test_checkpoint_roundtrip() {
    namespace fs = std::filesystem;
    TrainConfig cfg = small_cfg();
    cfg.steps_phase1 = 10;
    cfg.steps_phase2 = 10;
    cfg.lambda = 0.015;
    TrainRun run = train_two_phase(cfg);
    fs::path dir = fs::temp_directory_path() / "oshape_test_ckpt";
    fs::create_directories(dir);
    std::string p1 = (dir / "a.ckpt").string();
    std::string p2 = (dir / "b.ckpt").string();
    checkpoint_save(run, p1);

    Checkpoint ck = checkpoint_load(p1);
    check(ck.cfg.m == cfg.m && ck.cfg.n_data == cfg.n_data && ck.cfg.seed == cfg.seed,
          "metadata round trip");
    check_close(ck.cfg.lambda, cfg.lambda, 0.0, "lambda round trip");
    check(ck.phase == 2, "final phase recorded");

    TrainRun run2 = run;
    run2.model = ck.model;
    checkpoint_save(run2, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    check(s1 == s2, "save -> load -> save is byte identical");

    // loaded model reproduces the stored final loss on the seeded batch
    Rng eval_rng = Rng::substream(cfg.seed, 0x7265706c6179ULL);
    LossBreakdown replay = forward_batch(ck.model, cfg, eval_rng, ck.phase);
    check_close(replay.total, run.final_eval_loss, 1e-12, "deterministic replay of final loss");

    // truncation at any point is a load error, not partial state
    for (std::size_t cut : {3ul, 5ul, 40ul, s1.size() - 9, s1.size() - 1}) {
        std::string pt = (dir / "t.ckpt").string();
        std::ofstream out(pt, std::ios::binary | std::ios::trunc);
        out.write(s1.data(), static_cast<std::streamsize>(cut));
        out.close();
        bool threw = false;
        try {
            checkpoint_load(pt);
        } catch (const CheckpointError&) {
            threw = true;
        }
        check(threw, "truncated checkpoint fails to load (cut=" + std::to_string(cut) + ")");
    }
}

static void test_full_chain_gradient() {
    TrainConfig cfg;
    cfg.m = 4;
    cfg.n_data = 4;
    cfg.batch_symbols = 8; // two frames
    cfg.snr_db = 8.0;
    cfg.lambda = 0.01;
    cfg.seed = 33;
    Rng rng(cfg.seed);
    ShapingModel model;
    model.init(cfg.m, rng);
    BatchNoise noise = draw_batch_noise(cfg, rng);
    std::vector<Tensor> params = canonical_params(model);
    auto build = [&cfg, &noise](Tape& t, const std::vector<Var>& vs) {
        return build_loss_graph(t, vs, cfg, noise, true, true).total;
    };

    // analytic gradients once, then compare a spread of well-conditioned
    // elements from all three networks against central differences
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.param(p));
    tape.backward(build_loss_graph(tape, vars, cfg, noise, true, true).total);

    Rng pick_rng(7);
    std::vector<std::pair<std::size_t, std::size_t>> elems;
    int per_net[3] = {0, 0, 0};
    while (elems.size() < 12) {
        std::size_t pi = pick_rng.uniform_index(params.size());
        std::size_t ei = pick_rng.uniform_index(params[pi].numel());
        if (std::abs(tape.grad(vars[pi]).data[ei]) < 1e-6) continue;
        elems.emplace_back(pi, ei);
        per_net[pi / 8]++;
    }
    check(per_net[0] > 0 && per_net[1] > 0 && per_net[2] > 0,
          "subset spans all three networks");
    GradCheckReport rep = grad_check_subset(build, params, elems, 1e-5);
    std::printf("full-chain gradcheck: max rel err %.3g (analytic %.6g vs cd %.6g)\n",
                rep.max_rel_err, rep.analytic, rep.central_diff);
    check_lt(rep.max_rel_err, 1e-4, "full-chain gradient matches finite differences");
}

static void test_phase1_mi_at_15db() {
    TrainConfig cfg;
    cfg.m = 16;
    cfg.n_data = 16;
    cfg.batch_symbols = 1024;
    cfg.snr_db = 15.0;
    cfg.steps_phase1 = 600;
    cfg.steps_phase2 = 0;
    cfg.seed = 42;
    TrainRun run = train_two_phase(cfg);
    Rng eval_rng(909);
    double mi_bits = 0.0;
    int reps = 4;
    for (int i = 0; i < reps; ++i)
        mi_bits += forward_batch(run.model, cfg, eval_rng, 1).mi_bits();
    mi_bits /= reps;
    std::printf("phase-1 MI at 15 dB: %.3f bits\n", mi_bits);
    check_lt(3.7, mi_bits, "16-QAM at 15 dB converges past 3.7 bits");
}

static void test_config_validation() {
    TrainConfig cfg = small_cfg();
    cfg.batch_symbols = 255; // not a multiple of n_data
    bool threw = false;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        threw = std::string(e.what()).find("batch_symbols") != std::string::npos;
    }
    check(threw, "batch/frame divisibility enforced, error names the field");
}

int main() {
    test_entropy_uniform();
    test_initial_cross_entropy();
    test_phase2_total();
    test_forward_determinism();
    test_trace_determinism();
    test_lambda_zero_phase2_is_continuation();
    test_loss_trend();
    test_noiseless_convergence();
    test_divergence_guard();
    test_checkpoint_roundtrip();
    test_full_chain_gradient();
    test_phase1_mi_at_15db();
    test_config_validation();
    return summary("test_trainer");
}
